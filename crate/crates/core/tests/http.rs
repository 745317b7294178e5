mod common;

use std::sync::atomic::Ordering;
use std::time::Duration;

use common::mock_http::MockServer;
use planopt::gateway::{BackendConfig, CompletionBackend, Gateway, GatewayError, HttpBackend, RetryPolicy, Role};

fn quick_policy(max_attempts: u32) -> RetryPolicy {
    RetryPolicy { max_attempts, base_backoff: Duration::from_millis(5), jitter: 0.0, ..RetryPolicy::default() }
}

fn backend(server: &MockServer, max_attempts: u32, token: Option<&str>) -> HttpBackend {
    HttpBackend::new(&server.url, "test-model", token.map(String::from), quick_policy(max_attempts), 2, Duration::from_secs(5))
        .unwrap()
}

fn ask(b: &HttpBackend) -> Result<String, GatewayError> {
    let gateway_req = Gateway::new(planopt::gateway::ScriptedBackend::new([])).request(Role::Actor, "hello".into(), 0, 0);
    b.complete(&gateway_req)
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start(vec![500, 503], Duration::ZERO);
    let b = backend(&server, 4, None);
    assert_eq!(ask(&b).unwrap(), "mock reply");
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
    let stats = b.stats();
    assert_eq!((stats.requests, stats.attempts), (1, 3));
    assert_eq!(stats.backoffs, vec![Duration::from_millis(5), Duration::from_millis(10)]);
}

#[test]
fn exhausted_rate_limit_reports_attempts() {
    let server = MockServer::start(vec![429; 3], Duration::ZERO);
    let b = backend(&server, 3, None);
    assert_eq!(ask(&b), Err(GatewayError::RateLimited { attempts: 3 }));
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let server = MockServer::start(vec![401], Duration::ZERO);
    let b = backend(&server, 4, Some("secret"));
    assert!(matches!(ask(&b), Err(GatewayError::Auth { status: 401, .. })));
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_choices_is_malformed() {
    let server = MockServer::start(vec![222], Duration::ZERO);
    let b = backend(&server, 4, None);
    assert!(matches!(ask(&b), Err(GatewayError::MalformedReply(_))));
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn request_body_and_bearer_token() {
    let server = MockServer::start(vec![], Duration::ZERO);
    let b = backend(&server, 1, Some("tok-123"));
    ask(&b).unwrap();
    assert_eq!(server.auth_headers.lock().unwrap()[0].as_deref(), Some("Bearer tok-123"));
    let body: serde_json::Value = serde_json::from_str(&server.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
}

#[test]
fn token_comes_from_the_named_environment_variable() {
    let mut config = BackendConfig::http("http://127.0.0.1:9/none", "m");
    config.auth_env = Some("PLANOPT_TEST_TOKEN_THAT_IS_NOT_SET".into());
    let err = HttpBackend::from_config(&config).unwrap_err();
    assert!(matches!(&err, GatewayError::Auth { status: 0, message } if message.contains("PLANOPT_TEST_TOKEN_THAT_IS_NOT_SET")));

    let config = BackendConfig::http("", "m");
    assert!(matches!(HttpBackend::from_config(&config), Err(GatewayError::Config(_))));
}

#[test]
fn connection_refused_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let b = HttpBackend::new(url, "m", None, quick_policy(2), 1, Duration::from_secs(2)).unwrap();
    assert!(matches!(ask(&b), Err(GatewayError::Transport(_))));
    assert_eq!(b.stats().attempts, 2);
}
