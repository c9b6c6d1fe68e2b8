//! HTTP endpoints for the worst-viewpoint annotation study.
//!
//! A group is one DOV record: the candidate grid of one face of one cloud.
//! Candidate images are rendered on first request and cached. Selections
//! are appended to `selections.jsonl` in the session directory; on start
//! the file is replayed so a restarted server keeps earlier answers.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pcqa_view_core::dov::DovRecord;
use pcqa_view_core::geometry::sample_candidates;
use pcqa_view_core::metrics::{consistency_index, modal_choice};
use pcqa_view_core::render::{render, RenderConfig};
use pcqa_view_core::PointCloud;
use serde::{Deserialize, Serialize};

use crate::imaging::encode_png;
use crate::manifest::read_jsonl;

pub const SELECTIONS_FILE: &str = "selections.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: String,
    pub cloud_id: String,
    pub face_index: u8,
    pub rig: usize,
    pub image_urls: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub group_id: String,
    pub rater_id: String,
    pub worst_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub ci: Option<f64>,
    pub n_groups: usize,
    pub per_rater: BTreeMap<String, f64>,
    /// Modal selection per group; ties go to the lowest index.
    pub consensus: BTreeMap<String, usize>,
}

struct Inner {
    records: Vec<DovRecord>,
    clouds: BTreeMap<String, PointCloud>,
    render: RenderConfig,
    session: PathBuf,
    images: Mutex<HashMap<(usize, usize), Arc<Vec<u8>>>>,
    /// Latest selection per (rater, group index).
    selections: Mutex<BTreeMap<(String, usize), usize>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn group_id(i: usize) -> String {
    format!("g{i:05}")
}

fn parse_group(id: &str) -> Option<usize> {
    id.strip_prefix('g')?.parse().ok()
}

impl AppState {
    /// Build the state, replaying any selections already in `session`.
    pub fn new(
        records: Vec<DovRecord>,
        clouds: BTreeMap<String, PointCloud>,
        render: RenderConfig,
        session: &Path,
    ) -> anyhow::Result<Self> {
        for r in &records {
            if !clouds.contains_key(&r.cloud_key()) {
                anyhow::bail!("store lacks cloud {}", r.cloud_key());
            }
        }
        std::fs::create_dir_all(session).with_context(|| format!("creating {}", session.display()))?;
        let file = session.join(SELECTIONS_FILE);
        let mut selections = BTreeMap::new();
        if file.exists() {
            for s in read_jsonl::<Selection>(&file)? {
                if let Some(g) = parse_group(&s.group_id).filter(|&g| g < records.len()) {
                    selections.insert((s.rater_id, g), s.worst_index);
                }
            }
        }
        Ok(AppState(Arc::new(Inner {
            records,
            clouds,
            render,
            session: session.to_path_buf(),
            images: Mutex::new(HashMap::new()),
            selections: Mutex::new(selections),
        })))
    }

    pub fn groups(&self) -> Vec<Group> {
        self.0
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| Group {
                group_id: group_id(i),
                cloud_id: r.cloud_key(),
                face_index: r.face_index,
                rig: r.rig,
                image_urls: (0..r.candidate_scores.len()).map(|j| format!("/image/{}-{j}", group_id(i))).collect(),
            })
            .collect()
    }

    fn image(&self, group: usize, j: usize) -> anyhow::Result<Arc<Vec<u8>>> {
        if let Some(img) = self.0.images.lock().unwrap().get(&(group, j)) {
            return Ok(img.clone());
        }
        let r = &self.0.records[group];
        let grid = sample_candidates(&r.view()?, r.candidate_scores.len())?;
        let img = render(&self.0.clouds[&r.cloud_key()], &grid.view(j), &self.0.render)?;
        let png = Arc::new(encode_png(&img));
        self.0.images.lock().unwrap().insert((group, j), png.clone());
        Ok(png)
    }

    /// Validate and persist one selection.
    pub fn record(&self, s: Selection) -> Result<(), (StatusCode, String)> {
        let g = parse_group(&s.group_id)
            .filter(|&g| g < self.0.records.len())
            .ok_or((StatusCode::NOT_FOUND, format!("unknown group {}", s.group_id)))?;
        let n_v = self.0.records[g].candidate_scores.len();
        if s.worst_index >= n_v {
            return Err((StatusCode::BAD_REQUEST, format!("worst_index must be below {n_v}")));
        }
        if s.rater_id.trim().is_empty() {
            return Err((StatusCode::BAD_REQUEST, "rater_id is empty".into()));
        }
        let mut sel = self.0.selections.lock().unwrap();
        let line = serde_json::to_string(&s).expect("selection serializes");
        let io = |e: std::io::Error| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.0.session.join(SELECTIONS_FILE))
            .map_err(io)?;
        writeln!(f, "{line}").map_err(io)?;
        sel.insert((s.rater_id, g), s.worst_index);
        Ok(())
    }

    pub fn selections_of(&self, rater: &str) -> Vec<Selection> {
        self.0
            .selections
            .lock()
            .unwrap()
            .iter()
            .filter(|((r, _), _)| r == rater)
            .map(|((r, g), &w)| Selection {
                group_id: group_id(*g),
                rater_id: r.clone(),
                worst_index: w,
            })
            .collect()
    }

    /// Consistency of the latest selections with the scorer's worst candidates.
    pub fn ci(&self) -> CiReport {
        let sel = self.0.selections.lock().unwrap();
        let worst = |g: usize| self.0.records[g].optimized_index;
        let (human, machine): (Vec<usize>, Vec<usize>) = sel.iter().map(|((_, g), &w)| (w, worst(*g))).unzip();
        let mut per_rater_pairs: BTreeMap<String, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        let mut per_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for ((r, g), &w) in sel.iter() {
            let e = per_rater_pairs.entry(r.clone()).or_default();
            e.0.push(w);
            e.1.push(worst(*g));
            per_group.entry(*g).or_default().push(w);
        }
        CiReport {
            ci: consistency_index(&human, &machine).ok().filter(|_| !human.is_empty()),
            n_groups: per_group.len(),
            per_rater: per_rater_pairs
                .into_iter()
                .filter_map(|(r, (h, m))| consistency_index(&h, &m).ok().map(|c| (r, c)))
                .collect(),
            consensus: per_group
                .into_iter()
                .filter_map(|(g, v)| modal_choice(&v).map(|m| (group_id(g), m)))
                .collect(),
        }
    }
}

async fn groups(State(s): State<AppState>) -> Json<Vec<Group>> {
    Json(s.groups())
}

async fn image(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let parsed = id
        .split_once('-')
        .and_then(|(g, j)| Some((parse_group(g)?, j.parse::<usize>().ok()?)))
        .filter(|&(g, j)| g < s.0.records.len() && j < s.0.records[g].candidate_scores.len());
    let Some((g, j)) = parsed else {
        return (StatusCode::NOT_FOUND, format!("unknown image {id}")).into_response();
    };
    match tokio::task::spawn_blocking(move || s.image(g, j)).await {
        Ok(Ok(png)) => ([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn selection(State(s): State<AppState>, Json(sel): Json<Selection>) -> Response {
    match s.record(sel) {
        Ok(()) => Json(serde_json::json!({ "ok": true })).into_response(),
        Err((code, msg)) => (code, msg).into_response(),
    }
}

#[derive(Deserialize)]
struct RaterQuery {
    rater_id: String,
}

async fn selections(State(s): State<AppState>, Query(q): Query<RaterQuery>) -> Json<Vec<Selection>> {
    Json(s.selections_of(&q.rater_id))
}

async fn ci(State(s): State<AppState>) -> Json<CiReport> {
    Json(s.ci())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/groups", get(groups))
        .route("/image/{id}", get(image))
        .route("/selection", post(selection))
        .route("/selections", get(selections))
        .route("/ci", get(ci))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(state: AppState, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
