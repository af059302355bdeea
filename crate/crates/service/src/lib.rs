//! HTTP interface for interactive exploration: visibility maps from the fast
//! path, normalized kernels and resolution curves.
//!
//! Grids travel as base64 of little-endian `f32` with their dimensions in a
//! `header` object.

use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::extract::{Query, RawQuery};
use axum::http::{header, HeaderMap, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tower_http::cors::{Any, CorsLayer};

use qiup::analysis::{kernel_object_width, sweep_csv, ResolutionResult, DECONVOLUTION_ITERATIONS};
use qiup::config::{merge_patch, parse_setup_value, preset_text, SetupConfig};
use qiup::detection::{add_grid_noise, NoiseRegion};
use qiup::fastpath::FastPath;
use qiup::restore::richardson_lucy;
use qiup::scene::ObjectSpec;
use qiup::{Error, Grid};
use qiup_cli::{
    fast_visibility, micrometres, parse_length, region_json, resolution_options, result_json, sweep_points,
    visibility_summary, RegionArg,
};

/// Side of the centered crop returned when a request names no region.
pub const DEFAULT_GRID: usize = 512;

/// Failure of one request, rendered as `{"error": {"kind", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(kind: &'static str, message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, kind, message: message.into() }
    }

    fn unprocessable(kind: &'static str, message: impl Into<String>) -> Self {
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, kind, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Schema { .. } | Error::Parse(_) => StatusCode::BAD_REQUEST,
            Error::UnknownPreset(_) => StatusCode::NOT_FOUND,
            Error::UnsupportedMisalignment(_) => StatusCode::CONFLICT,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self { status, kind: e.kind(), message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"kind": self.kind, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Which configuration to start from and how to change it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupRequest {
    /// Preset name; ignored when `config` is given.
    #[serde(default)]
    pub preset: Option<String>,
    /// Complete configuration document.
    #[serde(default)]
    pub config: Option<Value>,
    /// JSON merge patch applied on top.
    #[serde(default)]
    pub overrides: Option<Value>,
    #[serde(default)]
    pub waist_um: Option<f64>,
    /// Transverse shift of lens L_i1 (um), `x` or `[x, y]`.
    #[serde(default)]
    pub lens_shift_i1_um: Option<Shift>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Shift {
    X(f64),
    Xy([f64; 2]),
}

impl SetupRequest {
    pub fn load(&self) -> ApiResult<SetupConfig> {
        let mut doc = match &self.config {
            Some(c) => c.clone(),
            None => {
                let text = preset_text(self.preset.as_deref().unwrap_or("setup1"))?;
                serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
            }
        };
        if let Some(p) = &self.overrides {
            merge_patch(&mut doc, p);
        }
        let mut cfg = parse_setup_value(doc)?;
        if let Some(w) = self.waist_um {
            cfg = cfg.with_waist_um(w)?;
        }
        if let Some(s) = self.lens_shift_i1_um {
            let xy = match s {
                Shift::X(x) => [x, 0.0],
                Shift::Xy(v) => v,
            };
            cfg = cfg.with_lens_shift_um("L_i1", xy)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseRegionName {
    Left,
    Right,
    All,
    None,
}

impl From<NoiseRegionName> for NoiseRegion {
    fn from(r: NoiseRegionName) -> Self {
        match r {
            NoiseRegionName::Left => NoiseRegion::LeftHalf,
            NoiseRegionName::Right => NoiseRegion::RightHalf,
            NoiseRegionName::All => NoiseRegion::All,
            NoiseRegionName::None => NoiseRegion::None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRequest {
    pub sigma: f64,
    #[serde(default = "all_region")]
    pub region: NoiseRegionName,
    #[serde(default)]
    pub seed: u64,
}

fn all_region() -> NoiseRegionName {
    NoiseRegionName::All
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityRequest {
    #[serde(default)]
    pub setup: SetupRequest,
    /// `bars`, `open` or `slits:<d_um>`.
    #[serde(default = "bars")]
    pub object: String,
    /// `full`, `band`, `center:<n>` or `x0,y0,w,h`; a centered crop by default.
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub noise: Option<NoiseRequest>,
    #[serde(default = "yes")]
    pub clip: bool,
    /// Richardson-Lucy iterations applied to the map.
    #[serde(default)]
    pub deconvolve_iterations: Option<usize>,
}

fn bars() -> String {
    "bars".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionRequest {
    #[serde(default)]
    pub setup: SetupRequest,
    pub waists_um: Vec<f64>,
    #[serde(default)]
    pub deconvolve: bool,
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Newline-delimited JSON with one event per finished waist.
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct KernelQuery {
    #[serde(default)]
    pub setup: Option<String>,
    /// Pump waist with unit, bare numbers in micrometres.
    #[serde(default)]
    pub waist: Option<String>,
    #[serde(default)]
    pub phase_matching: Option<bool>,
}

/// Body parsed with the path of the offending key in the message.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::from(Error::Schema { path, message: e.into_inner().to_string() })
    })
}

/// `{"header": {...}, "data": base64(f32 LE)}`.
pub fn encode_grid(grid: &Grid<f64>, mut header: Map<String, Value>) -> Value {
    let mut bytes = Vec::with_capacity(grid.as_slice().len() * 4);
    for v in grid.as_slice() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    header.insert("nx".into(), json!(grid.nx()));
    header.insert("ny".into(), json!(grid.ny()));
    header.insert("dtype".into(), json!("float32"));
    header.insert("byte_order".into(), json!("little"));
    json!({"header": header, "data": BASE64.encode(bytes)})
}

/// Inverse of [`encode_grid`].
pub fn decode_grid(value: &Value) -> Option<Grid<f32>> {
    let nx = value["header"]["nx"].as_u64()? as usize;
    let ny = value["header"]["ny"].as_u64()? as usize;
    let bytes = BASE64.decode(value["data"].as_str()?).ok()?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Grid::from_vec(nx, ny, data).ok()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
    })?
}

pub fn visibility(req: &VisibilityRequest) -> ApiResult<Value> {
    let cfg = req.setup.load()?;
    let spec: ObjectSpec = req.object.parse()?;
    if matches!(spec, ObjectSpec::File { .. }) {
        return Err(ApiError::bad_request("schema", "object: file objects are not served over HTTP"));
    }
    let setup = cfg.build::<f64>()?;
    let fast = FastPath::new(&setup, &cfg.kernel(&setup)?)?;
    let region_arg = match &req.region {
        Some(s) => s.parse::<RegionArg>().map_err(|e| ApiError::bad_request("schema", format!("region: {e}")))?,
        None => RegionArg::Center(DEFAULT_GRID),
    };
    let region = region_arg.resolve(&setup)?;
    let method = if setup.is_aligned() { "convolve" } else { "shift_variant" };
    let mut v = fast_visibility(&fast, &spec.build()?, region)?;
    if let Some(n) = req.noise {
        if !(n.sigma >= 0.0 && n.sigma.is_finite()) {
            return Err(ApiError::unprocessable("range", format!("noise.sigma must be non-negative, got {}", n.sigma)));
        }
        if n.sigma > 0.0 {
            v = add_grid_noise(&v, n.sigma, n.region.into(), n.seed)?;
        }
    }
    if req.clip || req.deconvolve_iterations.is_some() {
        v = v.map(|x| x.clamp(0.0, 1.0));
    }
    if let Some(it) = req.deconvolve_iterations {
        v = richardson_lucy(&v, &fast.kernel.weights, it)?;
    }
    let mut header = Map::new();
    header.insert("x0".into(), json!(region.x0));
    header.insert("y0".into(), json!(region.y0));
    header.insert("pixel_pitch_um".into(), json!(cfg.detector.pitch_um));
    Ok(json!({
        "setup_name": cfg.name,
        "setup_hash": cfg.hash(),
        "object": spec.to_string(),
        "method": method,
        "magnification": setup.magnification(),
        "region": region_json(region),
        "grid": encode_grid(&v, header),
        "summary": visibility_summary(&setup, &spec, &v, region),
    }))
}

/// Validated configuration and waists (m) of a resolution request.
fn resolution_inputs(req: &ResolutionRequest) -> ApiResult<(SetupConfig, Vec<f64>)> {
    if req.waists_um.is_empty() {
        return Err(ApiError::bad_request("schema", "waists_um: at least one waist is required"));
    }
    let cfg = req.setup.load()?;
    for (i, &w) in req.waists_um.iter().enumerate() {
        cfg.with_waist_um(w).map_err(|e| ApiError::unprocessable(e.kind(), format!("waists_um[{i}]: {e}")))?;
    }
    Ok((cfg, req.waists_um.iter().map(|w| w * 1e-6).collect()))
}

fn point_json(w: f64, r: &qiup::Result<ResolutionResult<f64>>) -> Value {
    match r {
        Ok(r) => result_json(r),
        Err(e) => json!({"waist_um": micrometres(w), "error": e.to_string(), "kind": e.kind()}),
    }
}

fn curve_json(cfg: &SetupConfig, deconvolve: bool, paired: &[(f64, qiup::Result<ResolutionResult<f64>>)]) -> Value {
    let stem = if deconvolve { "sweep_rl" } else { "sweep" };
    json!({
        "setup_name": cfg.name,
        "setup_hash": cfg.hash(),
        "deconvolved": deconvolve,
        "points": paired.iter().map(|(w, r)| point_json(*w, r)).collect::<Vec<_>>(),
        "csv": sweep_csv(stem, paired, deconvolve),
    })
}

pub fn resolution(req: &ResolutionRequest) -> ApiResult<Value> {
    let (cfg, waists) = resolution_inputs(req)?;
    let opts = resolution_options(req.deconvolve, req.iterations.unwrap_or(DECONVOLUTION_ITERATIONS));
    let paired = sweep_points(&cfg, &waists, &opts);
    Ok(curve_json(&cfg, req.deconvolve, &paired))
}

pub fn kernel(q: &KernelQuery) -> ApiResult<Value> {
    let mut req = SetupRequest { preset: q.setup.clone(), ..Default::default() };
    if let Some(w) = &q.waist {
        let m = parse_length(w).map_err(|e| ApiError::unprocessable("physics", format!("waist: {e}")))?;
        req.waist_um = Some(micrometres(m));
    }
    if let Some(pm) = q.phase_matching {
        req.overrides = Some(json!({"source": {"phase_matching": pm}}));
    }
    let cfg = req.load()?;
    let setup = cfg.build::<f64>()?;
    let k = cfg.kernel(&setup)?;
    let fast = FastPath::new(&setup, &k)?;
    let grid = Grid::from_vec(k.nx, k.ny, k.values.clone())?;
    let mut header = Map::new();
    header.insert("spacing_per_m".into(), json!(k.spacing()));
    header.insert("extent_per_m".into(), json!(k.extent));
    header.insert("idler_center_per_m".into(), json!(k.idler_center));
    Ok(json!({
        "setup_name": cfg.name,
        "setup_hash": cfg.hash(),
        "waist_um": cfg.pump.waist_um,
        "phase_matching": cfg.source.phase_matching,
        "grid": encode_grid(&grid, header),
        "summary": {
            "integral": k.integral(),
            "half_max_radius_per_m": k.half_max_radius_x(),
            "correlation_width_per_m": setup.source1.correlation_width(),
            "object_width_um": kernel_object_width(&fast) * 1e6,
            "magnification": setup.magnification(),
        },
    }))
}

async fn visibility_handler(body: Bytes) -> ApiResult<Json<Value>> {
    let req: VisibilityRequest = parse_body(&body)?;
    Ok(Json(blocking(move || visibility(&req)).await?))
}

fn wants_csv(headers: &HeaderMap) -> bool {
    headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()).is_some_and(|v| v.contains("text/csv"))
}

fn ndjson_line(v: &Value) -> Bytes {
    let mut s = v.to_string();
    s.push('\n');
    Bytes::from(s)
}

async fn resolution_handler(headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let req: ResolutionRequest = parse_body(&body)?;
    if !req.stream {
        let csv = wants_csv(&headers);
        let curve = blocking(move || resolution(&req)).await?;
        return Ok(if csv {
            let text = curve["csv"].as_str().unwrap_or_default().to_string();
            ([(header::CONTENT_TYPE, "text/csv")], text).into_response()
        } else {
            Json(curve).into_response()
        });
    }
    let (cfg, waists) = resolution_inputs(&req)?;
    let opts = resolution_options(req.deconvolve, req.iterations.unwrap_or(DECONVOLUTION_ITERATIONS));
    let (tx, rx) = tokio::sync::mpsc::channel::<Bytes>(16);
    tokio::task::spawn_blocking(move || {
        let total = waists.len();
        let mut paired = Vec::with_capacity(total);
        for (i, &w) in waists.iter().enumerate() {
            let r = sweep_points(&cfg, &[w], &opts).pop().expect("one waist in, one result out");
            let mut event = json!({"event": "point", "index": i, "total": total});
            if let (Value::Object(e), Value::Object(p)) = (&mut event, point_json(r.0, &r.1)) {
                e.extend(p);
            }
            if tx.blocking_send(ndjson_line(&event)).is_err() {
                return;
            }
            paired.push(r);
        }
        let mut done = curve_json(&cfg, req.deconvolve, &paired);
        done["event"] = json!("done");
        let _ = tx.blocking_send(ndjson_line(&done));
    });
    let stream =
        futures_util::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx)) });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}

async fn kernel_handler(RawQuery(raw): RawQuery) -> ApiResult<Json<Value>> {
    let q: KernelQuery = Query::try_from_uri(&format!("/?{}", raw.unwrap_or_default()).parse().expect("valid uri"))
        .map(|Query(q)| q)
        .map_err(|e| ApiError::bad_request("schema", e.body_text()))?;
    Ok(Json(blocking(move || kernel(&q)).await?))
}

/// Router with CORS open to any origin.
pub fn app() -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::ACCEPT]);
    Router::new()
        .route("/v1/visibility", post(visibility_handler))
        .route("/v1/resolution", post(resolution_handler))
        .route("/v1/kernel", get(kernel_handler))
        .layer(cors)
}
