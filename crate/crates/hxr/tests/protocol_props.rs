use hxr::protocol::{decode_error, error_reply, handle, INFO_PATH, PROTOCOL_HEADER};
use hxr_core::mock::{MockConfig, MockReservoir};
use hxr_core::service::{ServiceError, PROTOCOL_VERSION};
use proptest::prelude::*;

fn service_error() -> impl Strategy<Value = ServiceError> {
    prop_oneof![
        ".{0,40}".prop_map(ServiceError::Argument),
        (0usize..100_000, 1usize..100_000).prop_map(|(positions, max_positions)| ServiceError::Capacity {
            positions,
            max_positions
        }),
        (0u32..1000).prop_map(|server| ServiceError::Compatibility {
            server,
            client: PROTOCOL_VERSION
        }),
        (500u16..600, ".{0,40}").prop_map(|(status, message)| ServiceError::Server { status, message }),
    ]
}

proptest! {
    #[test]
    fn error_bodies_decode_to_the_same_error(e in service_error()) {
        let reply = error_reply(&e);
        prop_assert_eq!(decode_error(reply.status, &reply.body), e);
    }

    #[test]
    fn garbage_bodies_never_panic(status in 400u16..600, body in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_error(status, &body);
        let mock = MockReservoir::new(MockConfig::default()).unwrap();
        let version = PROTOCOL_VERSION.to_string();
        let reply = handle(&mock, "POST", "/v1/reservoir", Some(&version), &body);
        prop_assert!(reply.status == 400 || reply.status == 200 || reply.status == 413);
    }
}

#[test]
fn info_answers_without_the_version_header() {
    let mock = MockReservoir::new(MockConfig::default()).unwrap();
    assert_eq!(handle(&mock, "GET", INFO_PATH, None, b"").status, 200);
    assert_eq!(handle(&mock, "GET", INFO_PATH, Some("99"), b"").status, 200);
    assert!(!PROTOCOL_HEADER.is_empty());
}
