//! Live browser sessions against the in-process fixture site.

use webagent::browser::{open_session, Action, BrowserError, ScrollDirection, Session, SessionConfig};
use webagent::dom::{ElementRegistry, ElementRole, ScrollOffset};
use webagent::fixtures::FixtureServer;

fn nothing() -> ElementRegistry {
    ElementRegistry {
        snapshot_ref: String::new(),
        scroll_offset: ScrollOffset::default(),
        elements: Vec::new(),
    }
}

async fn open(server: &FixtureServer, path: &str) -> Session {
    open_with(server, path, SessionConfig::default()).await
}

async fn open_with(server: &FixtureServer, path: &str, config: SessionConfig) -> Session {
    let session = open_session(config).await.expect("browser session");
    session
        .execute(&Action::Navigate { url: server.url(path) }, &nothing())
        .await
        .expect("start page");
    session
}

#[tokio::test]
async fn index_page_registry_follows_document_order() {
    let server = FixtureServer::start_local().await.unwrap();
    let session = open(&server, "/index.html").await;
    let state = session.capture_state().await.unwrap();
    let reg = &state.registry;
    assert_eq!(reg.snapshot_ref, state.snapshot.id);
    assert!(reg.len() >= 14, "{} elements", reg.len());
    assert!(reg.iter().take(6).all(|e| e.role == ElementRole::Link));
    assert_eq!(reg.elements[11].text, "Online application form");
    assert!(reg.iter().enumerate().all(|(i, e)| e.index == i + 1 && e.node_ref.is_some()));
    let png = image::load_from_memory(&state.screenshot).unwrap();
    assert_eq!((png.width(), png.height()), (1280, 720));
    assert_eq!(state.open_tabs.len(), 1);
    session.close().await;
}

#[tokio::test]
async fn form_fill_and_submit_reaches_the_server() {
    let server = FixtureServer::start_local().await.unwrap();
    let session = open(&server, "/form/intake.html").await;
    let reg = session.capture_state().await.unwrap().registry;
    let by_name = |name: &str| {
        reg.iter()
            .find(|e| e.attributes.get("name").map(String::as_str) == Some(name))
            .map(|e| e.index as i64)
            .unwrap()
    };
    for (name, text) in [("full_name", "Alex Martin"), ("postal_code", "H3A 0G4")] {
        let out = session.execute(&Action::Input { index: by_name(name), text: text.into() }, &reg).await.unwrap();
        assert!(out.success, "{}", out.message);
    }
    let out = session
        .execute(&Action::SelectOption { index: by_name("case_type"), text: "family".into() }, &reg)
        .await
        .unwrap();
    assert!(out.message.contains("Family"), "{}", out.message);

    let err = session
        .execute(&Action::SelectOption { index: by_name("case_type"), text: "Criminal".into() }, &reg)
        .await
        .unwrap_err();
    assert!(matches!(&err, BrowserError::ElementNotInteractable(m) if m.contains("Landlord-tenant")), "{err}");

    let submit = reg.iter().find(|e| e.text == "Submit application").unwrap().index as i64;
    let out = session.execute(&Action::Click { index: submit }, &reg).await.unwrap();
    assert!(out.new_url.as_deref().unwrap_or_default().contains("/form/submit"), "{out:?}");

    let subs = server.submissions();
    assert_eq!(subs.len(), 1);
    assert_eq!(subs[0].form_fields.get("full_name").map(String::as_str), Some("Alex Martin"));
    assert_eq!(subs[0].form_fields.get("case_type").map(String::as_str), Some("Family"));

    let out = session.execute(&Action::Extract { question: "confirmation".into() }, &reg).await.unwrap();
    assert!(out.message.contains("123-456"), "{}", out.message);
    session.close().await;
}

#[tokio::test]
async fn stale_and_unknown_indices_are_rejected() {
    let server = FixtureServer::start_local().await.unwrap();
    let session = open(&server, "/index.html").await;
    let reg = session.capture_state().await.unwrap().registry;

    let err = session.execute(&Action::Click { index: 999 }, &reg).await.unwrap_err();
    assert!(matches!(err, BrowserError::UnknownIndex { index: 999, .. }), "{err}");
    assert!(err.is_recoverable());

    session.execute(&Action::Click { index: 2 }, &reg).await.unwrap();
    let err = session.execute(&Action::Click { index: 1 }, &reg).await.unwrap_err();
    assert!(matches!(err, BrowserError::StaleRegistry), "{err}");

    let fresh = session.capture_state().await.unwrap().registry;
    assert_ne!(fresh.snapshot_ref, reg.snapshot_ref);
    session.execute(&Action::Click { index: 1 }, &fresh).await.unwrap();
    session.close().await;
}

#[tokio::test]
async fn history_scroll_and_tabs() {
    let server = FixtureServer::start_local().await.unwrap();
    let session = open(&server, "/booking/external.html").await;
    let reg = session.capture_state().await.unwrap().registry;
    let first_tab = session.tabs().await.unwrap()[0].tab_id.clone();

    let out = session.execute(&Action::Click { index: 7 }, &reg).await.unwrap();
    assert!(out.message.contains("new tab"), "{}", out.message);
    let tabs = session.tabs().await.unwrap();
    assert_eq!(tabs.len(), 2);
    assert!(session.current_url().await.unwrap().contains("partner-form"));

    session.execute(&Action::SwitchTab { tab_id: first_tab.clone() }, &nothing()).await.unwrap();
    assert!(session.current_url().await.unwrap().contains("external.html"));
    let err = session.execute(&Action::SwitchTab { tab_id: "nope".into() }, &nothing()).await.unwrap_err();
    assert!(matches!(err, BrowserError::UnknownTab(_)));

    session.execute(&Action::Navigate { url: server.url("/search.html") }, &nothing()).await.unwrap();
    let out = session.execute(&Action::GoBack, &nothing()).await.unwrap();
    assert!(out.new_url.unwrap().contains("external.html"));

    let out = session.execute(&Action::Scroll { direction: ScrollDirection::Up }, &nothing()).await.unwrap();
    assert!(out.message.contains("top"), "{}", out.message);
    session.close().await;
}

#[tokio::test]
async fn host_allowlist_and_closed_sessions() {
    let server = FixtureServer::start_local().await.unwrap();
    let config = SessionConfig {
        allowed_hosts: Some(vec!["127.0.0.1".into()]),
        ..SessionConfig::default()
    };
    let session = open_with(&server, "/index.html", config).await;
    let err = session
        .execute(&Action::Navigate { url: "http://example.invalid/".into() }, &nothing())
        .await
        .unwrap_err();
    assert!(matches!(err, BrowserError::HostNotAllowed(_)), "{err}");

    let err = session.execute(&Action::Wait { seconds: 31.0 }, &nothing()).await.unwrap_err();
    assert!(matches!(err, BrowserError::InvalidAction(_)));

    session.close().await;
    assert!(session.is_closed());
    let err = session.execute(&Action::GoBack, &nothing()).await.unwrap_err();
    assert!(matches!(err, BrowserError::SessionClosed));
    assert!(session.capture_state().await.is_err());
}
