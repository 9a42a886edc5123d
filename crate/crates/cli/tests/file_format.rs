use serde_json::Value;
use sofa_cli::format::{self, FormatError};
use sofa_cli::pipeline::{build_firewall, BuildConfig, Mode};
use sofa_core::obfuscate::ObfuscationOptions;
use sofa_core::rules::parse_acl;
use sofa_core::{Backend, ObfuscatedFirewall, RandomSource, Scheme};

const ACL: &str = "\
permit 10.1.*.* * * * any
deny 10.*.*.* * * * any
permit 192.168.7.9 * * * any
";

fn build(scheme: &str, backend: Backend) -> ObfuscatedFirewall {
    let acl = parse_acl(ACL).unwrap();
    let scheme: Scheme = scheme.parse().unwrap();
    let cfg = BuildConfig::new(
        scheme,
        Mode::Standard,
        ObfuscationOptions::with_backend(backend),
    );
    build_firewall(&acl, &cfg, &RandomSource::new(5), None).unwrap()
}

fn all_firewalls() -> Vec<ObfuscatedFirewall> {
    let mut out: Vec<_> = ["naive", "basic", "blocking", "dnc", "dnc/basic"]
        .iter()
        .map(|s| build(s, Backend::Transparent))
        .collect();
    out.push(build("blocking", Backend::clt()));
    out.push(build("dnc", Backend::clt()));
    out
}

#[test]
fn round_trip_is_byte_identical() {
    for fw in all_firewalls() {
        let text = format::to_string(&fw).unwrap();
        let back = format::from_str(&text).unwrap();
        assert_eq!(back, fw, "{}", fw.scheme);
        assert_eq!(format::to_string(&back).unwrap(), text, "{}", fw.scheme);
    }
}

fn keys(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                keys(x, out);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| keys(x, out)),
        _ => {}
    }
}

#[test]
fn no_denylisted_key_is_reachable() {
    for fw in all_firewalls() {
        let v = format::to_value(&fw).unwrap();
        assert_eq!(format::forbidden_key(&v), None);
        let mut ks = Vec::new();
        keys(&v, &mut ks);
        for k in &ks {
            assert!(
                !format::DENYLIST.contains(&k.as_str()),
                "{}: key {k}",
                fw.scheme
            );
        }
    }
}

#[test]
fn forbidden_key_is_found_at_depth() {
    let v: Value = serde_json::from_str(r#"{"rules":[{"parts":[{"alpha":"AA=="}]}]}"#).unwrap();
    assert_eq!(format::forbidden_key(&v).as_deref(), Some("alpha"));
}

fn rewrite(text: &str, f: impl FnOnce(&mut Value)) -> String {
    let mut v: Value = serde_json::from_str(text).unwrap();
    f(&mut v);
    serde_json::to_string_pretty(&v).unwrap()
}

#[test]
fn corrupted_rule_is_named() {
    let fw = build("basic", Backend::Transparent);
    let text = format::to_string(&fw).unwrap();
    let bad = rewrite(&text, |v| {
        let idx = &mut v["rules"][2]["parts"][0]["indices"][0];
        *idx = Value::from(idx.as_u64().unwrap() ^ 1);
    });
    let err = format::from_str(&bad).unwrap_err();
    assert!(err.is_integrity(), "{err}");
    assert!(err.to_string().contains("rule 2"), "{err}");
}

#[test]
fn corrupted_encoding_is_detected() {
    let fw = build("naive", Backend::Transparent);
    let text = format::to_string(&fw).unwrap();
    let bad = rewrite(&text, |v| {
        let s = v["rules"][1]["parts"][0]["last"][0]
            .as_str()
            .unwrap()
            .to_string();
        let flipped = match s.strip_prefix('A') {
            Some(rest) => format!("B{rest}"),
            None => format!("A{}", &s[1..]),
        };
        v["rules"][1]["parts"][0]["last"][0] = Value::from(flipped);
    });
    let err = format::from_str(&bad).unwrap_err();
    assert!(
        err.is_integrity() && err.to_string().contains("rule 1"),
        "{err}"
    );
}

#[test]
fn corrupted_segment_is_named() {
    let fw = build("dnc", Backend::Transparent);
    let text = format::to_string(&fw).unwrap();
    let bad = rewrite(&text, |v| {
        let kappa = v["segments"][3]["kappa"].as_u64().unwrap();
        v["segments"][3]["kappa"] = Value::from(kappa + 1);
    });
    let err = format::from_str(&bad).unwrap_err();
    assert!(
        err.is_integrity() && err.to_string().contains("segment 3"),
        "{err}"
    );
}

#[test]
fn wrong_version_and_syntax_are_rejected() {
    let fw = build("naive", Backend::Transparent);
    let text = format::to_string(&fw).unwrap();
    let bad = rewrite(&text, |v| v["format"] = Value::from("sofa/9"));
    assert!(matches!(
        format::from_str(&bad),
        Err(FormatError::Version { .. })
    ));
    assert!(matches!(format::from_str("{"), Err(FormatError::Syntax(_))));
}

#[test]
fn tampered_header_is_detected() {
    let fw = build("naive", Backend::Transparent);
    let text = format::to_string(&fw).unwrap();
    let bad = rewrite(&text, |v| v["default_action"] = Value::from("permit"));
    let err = format::from_str(&bad).unwrap_err();
    assert!(
        err.is_integrity() && err.to_string().contains("file header"),
        "{err}"
    );
}
