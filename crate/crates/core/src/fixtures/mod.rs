//! Local test website served from files embedded in the binary.
//!
//! The site is a small legal-help portal with information pages, a case
//! search, an office finder, an intake form and two booking flows. Form
//! and booking submissions are kept in memory and exposed through a
//! verification API that task validators query:
//!
//! | route | |
//! |---|---|
//! | `POST /form/submit` | records a submission, shows confirmation `123-456` |
//! | `POST /booking/submit` | records a booking; a taken slot is refused |
//! | `GET /api/submissions/latest`, `/api/submissions/{id}` | submission records |
//! | `GET /api/bookings/latest`, `/api/bookings/{ref}` | booking records |
//! | `DELETE /api/state` | clears all records |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Form, Json, Router};
use include_dir::{include_dir, Dir};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

static SITE: Dir<'_> = include_dir!("$CARGO_MANIFEST_DIR/fixtures/site");

/// Confirmation number every accepted fixture form submission receives.
pub const CONFIRMATION_NUMBER: &str = "123-456";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub form_fields: BTreeMap<String, String>,
    pub received_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booking {
    pub booking_ref: String,
    pub date: String,
    pub slot: String,
    pub attendee_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub email: Option<String>,
    pub received_at: String,
}

#[derive(Debug, Default)]
struct Records {
    submissions: Vec<Submission>,
    bookings: Vec<Booking>,
}

type Shared = Arc<Mutex<Records>>;

/// A running fixture server. Dropping it stops the server.
#[derive(Debug)]
pub struct FixtureServer {
    addr: SocketAddr,
    records: Shared,
    task: JoinHandle<()>,
}

impl FixtureServer {
    /// Binds `addr` (use port 0 for any free port) and starts serving.
    pub async fn start(addr: SocketAddr) -> std::io::Result<FixtureServer> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let records = Shared::default();
        let app = router(records.clone());
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!("fixture server stopped: {e}");
            }
        });
        Ok(FixtureServer { addr, records, task })
    }

    /// Starts on a free loopback port.
    pub async fn start_local() -> std::io::Result<FixtureServer> {
        Self::start(SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://127.0.0.1:<port>` without a trailing slash.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url(), path.trim_start_matches('/'))
    }

    pub fn submissions(&self) -> Vec<Submission> {
        self.records.lock().unwrap().submissions.clone()
    }

    pub fn bookings(&self) -> Vec<Booking> {
        self.records.lock().unwrap().bookings.clone()
    }

    /// Stores a submission as if the form had been sent.
    pub fn seed_submission(&self, fields: BTreeMap<String, String>) -> Submission {
        record_submission(&self.records, fields)
    }

    pub fn reset(&self) {
        *self.records.lock().unwrap() = Records::default();
    }

    pub fn shutdown(self) {
        self.task.abort();
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Paths of all embedded site files, e.g. `form/intake.html`.
pub fn site_files() -> Vec<String> {
    fn walk(dir: &Dir<'_>, out: &mut Vec<String>) {
        for f in dir.files() {
            out.push(f.path().to_string_lossy().into_owned());
        }
        for d in dir.dirs() {
            walk(d, out);
        }
    }
    let mut out = Vec::new();
    walk(&SITE, &mut out);
    out.sort();
    out
}

fn router(records: Shared) -> Router {
    Router::new()
        .route("/form/submit", post(submit_form))
        .route("/booking/submit", post(submit_booking))
        .route("/api/submissions/latest", get(latest_submission))
        .route("/api/submissions/{id}", get(submission_by_id))
        .route("/api/submissions", get(all_submissions))
        .route("/api/bookings/latest", get(latest_booking))
        .route("/api/bookings/{reference}", get(booking_by_ref))
        .route("/api/bookings", get(all_bookings))
        .route("/api/state", delete(reset_state))
        .fallback(get(static_file))
        .with_state(records)
}

async fn static_file(uri: Uri) -> Response {
    let mut path = uri.path().trim_start_matches('/').to_string();
    if path.is_empty() || path.ends_with('/') {
        path.push_str("index.html");
    }
    match SITE.get_file(&path) {
        Some(file) => {
            let mime = match path.rsplit('.').next() {
                Some("html") => "text/html; charset=utf-8",
                Some("css") => "text/css",
                Some("js") => "text/javascript",
                Some("png") => "image/png",
                Some("json") => "application/json",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, mime)], file.contents()).into_response()
        }
        None => (StatusCode::NOT_FOUND, Html(page("Not found", "<p>This page does not exist.</p>"))).into_response(),
    }
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>{title}</title><link rel=\"stylesheet\" href=\"/style.css\"></head>\
         <body><header><a class=\"brand\" href=\"/index.html\">Legal Help Portal</a></header><main><h1>{title}</h1>{body}</main></body></html>"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn record_submission(records: &Shared, fields: BTreeMap<String, String>) -> Submission {
    let submission = Submission {
        submission_id: CONFIRMATION_NUMBER.to_string(),
        form_fields: fields,
        received_at: now(),
    };
    records.lock().unwrap().submissions.push(submission.clone());
    submission
}

async fn submit_form(State(records): State<Shared>, Form(fields): Form<BTreeMap<String, String>>) -> Response {
    let missing: Vec<&str> = ["full_name", "postal_code"]
        .into_iter()
        .filter(|k| fields.get(*k).is_none_or(|v| v.trim().is_empty()))
        .collect();
    if !missing.is_empty() {
        let body = format!(
            "<p class=\"error\">Missing required fields: {}.</p><p><a href=\"/form/intake.html\">Back to the form</a></p>",
            missing.join(", ")
        );
        return (StatusCode::BAD_REQUEST, Html(page("Application incomplete", &body))).into_response();
    }
    let s = record_submission(&records, fields);
    let body = format!(
        "<p id=\"confirmation\">Form submitted successfully. Your confirmation number is {}.</p>\
         <p><a href=\"/index.html\">Back to the portal</a></p>",
        s.submission_id
    );
    Html(page("Application received", &body)).into_response()
}

#[derive(Debug, Deserialize)]
struct BookingForm {
    #[serde(default)]
    date: String,
    #[serde(default)]
    slot: String,
    #[serde(default)]
    attendee_name: String,
    email: Option<String>,
}

async fn submit_booking(State(records): State<Shared>, Form(form): Form<BookingForm>) -> Response {
    let date = form.date.trim().to_string();
    let slot = form.slot.trim().to_string();
    let name = form.attendee_name.trim().to_string();
    if chrono::NaiveDate::parse_from_str(&date, "%Y-%m-%d").is_err() || slot.is_empty() || name.is_empty() {
        let body = "<p class=\"error\">A date, a time and a name are required.</p><p><a href=\"/booking/index.html\">Back</a></p>";
        return (StatusCode::BAD_REQUEST, Html(page("Booking incomplete", body))).into_response();
    }
    let mut guard = records.lock().unwrap();
    if guard.bookings.iter().any(|b| b.date == date && b.slot == slot) {
        let body = format!(
            "<p class=\"error\">The slot {} on {} is unavailable. Please choose another time.</p><p><a href=\"/booking/index.html\">Back</a></p>",
            escape(&slot),
            escape(&date)
        );
        return (StatusCode::CONFLICT, Html(page("Slot unavailable", &body))).into_response();
    }
    let booking = Booking {
        booking_ref: format!("BK-{}-{}", date.replace('-', ""), slot.replace(':', "")),
        date,
        slot,
        attendee_name: name,
        email: form.email.filter(|e| !e.trim().is_empty()),
        received_at: now(),
    };
    guard.bookings.push(booking.clone());
    let body = format!(
        "<p id=\"confirmation\">Booking confirmed for {} on {} at {}. Your booking reference is {}.</p>",
        escape(&booking.attendee_name),
        booking.date,
        escape(&booking.slot),
        booking.booking_ref
    );
    Html(page("Booking confirmed", &body)).into_response()
}

fn not_found(what: &str) -> Response {
    (StatusCode::NOT_FOUND, Json(serde_json::json!({ "error": format!("{what} not found") }))).into_response()
}

async fn latest_submission(State(records): State<Shared>) -> Response {
    match records.lock().unwrap().submissions.last() {
        Some(s) => Json(s.clone()).into_response(),
        None => not_found("submission"),
    }
}

async fn submission_by_id(State(records): State<Shared>, Path(id): Path<String>) -> Response {
    match records.lock().unwrap().submissions.iter().rev().find(|s| s.submission_id == id) {
        Some(s) => Json(s.clone()).into_response(),
        None => not_found("submission"),
    }
}

async fn all_submissions(State(records): State<Shared>) -> Json<Vec<Submission>> {
    Json(records.lock().unwrap().submissions.clone())
}

async fn latest_booking(State(records): State<Shared>) -> Response {
    match records.lock().unwrap().bookings.last() {
        Some(b) => Json(b.clone()).into_response(),
        None => not_found("booking"),
    }
}

async fn booking_by_ref(State(records): State<Shared>, Path(reference): Path<String>) -> Response {
    match records.lock().unwrap().bookings.iter().find(|b| b.booking_ref == reference) {
        Some(b) => Json(b.clone()).into_response(),
        None => not_found("booking"),
    }
}

async fn all_bookings(State(records): State<Shared>) -> Json<Vec<Booking>> {
    Json(records.lock().unwrap().bookings.clone())
}

async fn reset_state(State(records): State<Shared>) -> StatusCode {
    *records.lock().unwrap() = Records::default();
    StatusCode::NO_CONTENT
}
