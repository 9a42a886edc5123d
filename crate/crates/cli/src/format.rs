//! `sofa/1` firewall files.
//!
//! JSON with keys in sorted order and big integers as base64 of their
//! big-endian magnitude. Every rule and every segment carries a SHA-256
//! digest of its own canonical JSON, so a flipped byte is reported with the
//! rule (or segment) it belongs to. A file-level digest covers the rest.
//! Only public material is representable: the schema has no slot for secret
//! keys, unit classifications, ratios or plaintext rule bits, and
//! [`DENYLIST`] is checked on every save.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

use sofa_core::firewall::{
    EncodingPair, EncodingPairUnit, Layout, ObfuscatedRule, RuleCipher, Segment,
};
use sofa_core::ges::{CltPublicParams, CltZeroTest, PublicParams, TransparentParams};
use sofa_core::rules::{Field, HeaderField};
use sofa_core::{
    Action, BitMode, Encoding, FieldLayout, GesParams, ObfuscatedFirewall, Scheme, ZeroTestParam,
};

pub const FORMAT_TAG: &str = "sofa/1";

/// Keys that must never appear anywhere in a firewall file.
pub const DENYLIST: &[&str] = &[
    "secret",
    "secret_key",
    "primes",
    "plaintext_moduli",
    "z",
    "z_inv_powers",
    "alpha",
    "alphas",
    "rho",
    "eta",
    "etas",
    "equal",
    "unequal",
    "equal_set",
    "unequal_set",
    "sigma",
    "permutation",
    "bits",
    "wildcard",
    "wildcards",
    "pattern",
    "filters",
    "ratio",
];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a firewall file: {0}")]
    Syntax(String),
    #[error("unsupported format '{found}', expected '{FORMAT_TAG}'")]
    Version { found: String },
    #[error("invalid firewall file: {0}")]
    Invalid(String),
    #[error("integrity check failed for {0}")]
    Integrity(String),
    #[error("serializer produced forbidden key '{0}'")]
    Forbidden(String),
}

impl FormatError {
    pub fn is_integrity(&self) -> bool {
        matches!(self, FormatError::Integrity(_))
    }
}

type Result<T> = std::result::Result<T, FormatError>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileV1 {
    format: String,
    scheme: String,
    layout: LayoutV1,
    default_action: String,
    segments: Vec<SegmentV1>,
    rules: Vec<RuleV1>,
    digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayoutV1 {
    Bits { mode: String, width: usize },
    Fields { fields: Vec<FieldV1> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldV1 {
    name: String,
    header: String,
    offset: u8,
    width: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentV1 {
    lambda: u32,
    kappa: u32,
    bit_offset: usize,
    bit_width: usize,
    public: PublicV1,
    zero_test: ZeroTestV1,
    units: Vec<[String; 4]>,
    digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
enum PublicV1 {
    Transparent {
        modulus: String,
    },
    Clt {
        x0: String,
        prime_count: usize,
        prime_bits: u32,
        message_bits: u32,
        noise_bits: u32,
        nu: u32,
        h_bits: u32,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
enum ZeroTestV1 {
    Transparent,
    Clt {
        pzt: String,
        calibration_margin: i64,
        zero_max_bits: u64,
        nonzero_min_bits: u64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleV1 {
    action: String,
    parts: Vec<PartV1>,
    digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PartV1 {
    Naive {
        units: Vec<[String; 4]>,
        last: [String; 2],
    },
    Basic {
        indices: Vec<u32>,
        last: [String; 2],
    },
    Blocking {
        tables: Vec<Vec<[String; 2]>>,
        last: [String; 2],
    },
}

fn b64(x: &BigUint) -> String {
    B64.encode(x.to_bytes_be())
}

fn pair(p: &EncodingPair) -> [String; 2] {
    [b64(p.u.payload()), b64(p.v.payload())]
}

fn unit(u: &EncodingPairUnit) -> [String; 4] {
    let [a, b] = pair(&u.zero);
    let [c, d] = pair(&u.one);
    [a, b, c, d]
}

fn digest(v: &Value) -> String {
    let bytes = serde_json::to_vec(v).expect("values always serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Digest of `v` with its own `digest` key removed.
fn digest_without_self(v: &Value) -> String {
    let mut v = v.clone();
    if let Value::Object(map) = &mut v {
        map.remove("digest");
    }
    digest(&v)
}

fn seal<T: Serialize>(item: &T) -> Value {
    let mut v = serde_json::to_value(item).expect("schema types serialize");
    let d = digest_without_self(&v);
    if let Value::Object(map) = &mut v {
        map.insert("digest".into(), Value::String(d));
    }
    v
}

fn layout_v1(layout: &Layout) -> LayoutV1 {
    match layout {
        Layout::Bits(mode) => LayoutV1::Bits {
            mode: mode.name().into(),
            width: mode.width(),
        },
        Layout::Fields(l) => LayoutV1::Fields {
            fields: l
                .fields()
                .iter()
                .map(|f| FieldV1 {
                    name: f.name.clone(),
                    header: f.header.as_str().into(),
                    offset: f.offset,
                    width: f.width,
                })
                .collect(),
        },
    }
}

fn segment_v1(s: &Segment) -> SegmentV1 {
    let public = match &s.params.public {
        PublicParams::Transparent(p) => PublicV1::Transparent {
            modulus: b64(&p.modulus),
        },
        PublicParams::Clt(p) => PublicV1::Clt {
            x0: b64(&p.x0),
            prime_count: p.primes,
            prime_bits: p.eta,
            message_bits: p.alpha_bits,
            noise_bits: p.rho_noise,
            nu: p.nu,
            h_bits: p.h_bits,
        },
    };
    let zero_test = match &s.zero_test {
        ZeroTestParam::Transparent => ZeroTestV1::Transparent,
        ZeroTestParam::Clt(z) => ZeroTestV1::Clt {
            pzt: b64(&z.pzt),
            calibration_margin: z.calibration_margin,
            zero_max_bits: z.zero_max_bits,
            nonzero_min_bits: z.nonzero_min_bits,
        },
    };
    SegmentV1 {
        lambda: s.params.lambda,
        kappa: s.params.kappa,
        bit_offset: s.bit_offset,
        bit_width: s.bit_width,
        public,
        zero_test,
        units: s.units.iter().map(unit).collect(),
        digest: String::new(),
    }
}

fn rule_v1(r: &ObfuscatedRule) -> RuleV1 {
    RuleV1 {
        action: r.action.to_string(),
        parts: r
            .parts
            .iter()
            .map(|p| match p {
                RuleCipher::Naive { units, last } => PartV1::Naive {
                    units: units.iter().map(unit).collect(),
                    last: pair(last),
                },
                RuleCipher::Basic { indices, last } => PartV1::Basic {
                    indices: indices.clone(),
                    last: pair(last),
                },
                RuleCipher::Blocking { tables, last } => PartV1::Blocking {
                    tables: tables
                        .iter()
                        .map(|t| t.iter().map(pair).collect())
                        .collect(),
                    last: pair(last),
                },
            })
            .collect(),
        digest: String::new(),
    }
}

/// Canonical JSON value of a firewall.
pub fn to_value(fw: &ObfuscatedFirewall) -> Result<Value> {
    let mut segments = Vec::with_capacity(fw.segments.len());
    for s in &fw.segments {
        segments.push(seal(&segment_v1(s)));
    }
    let rules: Vec<Value> = fw.rules.iter().map(|r| seal(&rule_v1(r))).collect();
    let mut map = serde_json::Map::new();
    map.insert("format".into(), FORMAT_TAG.into());
    map.insert("scheme".into(), fw.scheme.to_string().into());
    map.insert(
        "layout".into(),
        serde_json::to_value(layout_v1(&fw.layout)).expect("layout serializes"),
    );
    map.insert(
        "default_action".into(),
        fw.default_action.to_string().into(),
    );
    map.insert("segments".into(), Value::Array(segments));
    map.insert("rules".into(), Value::Array(rules));
    let d = digest(&Value::Object(map.clone()));
    map.insert("digest".into(), Value::String(d));
    let v = Value::Object(map);
    if let Some(key) = forbidden_key(&v) {
        return Err(FormatError::Forbidden(key));
    }
    Ok(v)
}

/// First denylisted object key anywhere in `v`.
pub fn forbidden_key(v: &Value) -> Option<String> {
    match v {
        Value::Object(map) => map.iter().find_map(|(k, child)| {
            if DENYLIST.contains(&k.as_str()) {
                Some(k.clone())
            } else {
                forbidden_key(child)
            }
        }),
        Value::Array(items) => items.iter().find_map(forbidden_key),
        _ => None,
    }
}

pub fn to_string(fw: &ObfuscatedFirewall) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&to_value(fw)?).expect("values always serialize");
    s.push('\n');
    Ok(s)
}

pub fn save(fw: &ObfuscatedFirewall, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(fw)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ObfuscatedFirewall> {
    from_str(&std::fs::read_to_string(path)?)
}

pub fn from_str(text: &str) -> Result<ObfuscatedFirewall> {
    let v: Value = serde_json::from_str(text).map_err(|e| FormatError::Syntax(e.to_string()))?;
    match v.get("format").and_then(Value::as_str) {
        Some(FORMAT_TAG) => {}
        Some(other) => {
            return Err(FormatError::Version {
                found: other.into(),
            })
        }
        None => return Err(FormatError::Syntax("missing 'format' tag".into())),
    }
    let items = |key: &str| -> Result<Vec<Value>> {
        match v.get(key) {
            Some(Value::Array(a)) => Ok(a.clone()),
            _ => Err(FormatError::Invalid(format!("'{key}' must be an array"))),
        }
    };
    for (s, seg) in items("segments")?.iter().enumerate() {
        check_digest(seg, || format!("segment {s}"))?;
    }
    for (r, rule) in items("rules")?.iter().enumerate() {
        check_digest(rule, || format!("rule {r}"))?;
    }
    check_digest(&v, || "file header".to_string())?;
    let file: FileV1 =
        serde_json::from_value(v).map_err(|e| FormatError::Invalid(e.to_string()))?;
    decode(file)
}

fn check_digest(v: &Value, what: impl Fn() -> String) -> Result<()> {
    let stored = v.get("digest").and_then(Value::as_str);
    match stored {
        Some(d) if d == digest_without_self(v) => Ok(()),
        Some(_) => Err(FormatError::Integrity(format!(
            "{}: digest mismatch",
            what()
        ))),
        None => Err(FormatError::Integrity(format!(
            "{}: missing digest",
            what()
        ))),
    }
}

fn invalid(msg: impl Into<String>) -> FormatError {
    FormatError::Invalid(msg.into())
}

fn decode(file: FileV1) -> Result<ObfuscatedFirewall> {
    let scheme: Scheme = file.scheme.parse().map_err(invalid)?;
    let layout = match file.layout {
        LayoutV1::Bits { mode, width } => Layout::Bits(match mode.as_str() {
            "standard" if width == 32 => BitMode::Standard,
            "extended" if width == 104 => BitMode::Extended,
            "raw" => BitMode::Raw(width),
            _ => return Err(invalid(format!("bit mode '{mode}' with width {width}"))),
        }),
        LayoutV1::Fields { fields } => {
            let fields = fields
                .into_iter()
                .map(|f| {
                    Ok(Field {
                        header: f
                            .header
                            .parse::<HeaderField>()
                            .map_err(|e| invalid(e.to_string()))?,
                        name: f.name,
                        offset: f.offset,
                        width: f.width,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Layout::Fields(FieldLayout::new(fields).map_err(|e| invalid(e.to_string()))?)
        }
    };
    let segments = file
        .segments
        .into_iter()
        .enumerate()
        .map(|(s, seg)| decode_segment(seg).map_err(|e| in_item(e, &format!("segment {s}"))))
        .collect::<Result<Vec<_>>>()?;
    let rules = file
        .rules
        .into_iter()
        .enumerate()
        .map(|(r, rule)| decode_rule(rule, &segments).map_err(|e| in_item(e, &format!("rule {r}"))))
        .collect::<Result<Vec<_>>>()?;
    let fw = ObfuscatedFirewall {
        scheme,
        layout,
        segments,
        rules,
        default_action: parse_action(&file.default_action)?,
    };
    fw.validate().map_err(FormatError::Invalid)?;
    Ok(fw)
}

fn in_item(e: FormatError, what: &str) -> FormatError {
    match e {
        FormatError::Integrity(m) => FormatError::Integrity(format!("{what}: {m}")),
        FormatError::Invalid(m) => FormatError::Invalid(format!("{what}: {m}")),
        other => other,
    }
}

fn parse_action(s: &str) -> Result<Action> {
    s.parse()
        .map_err(|e: sofa_core::rules::RuleError| invalid(e.to_string()))
}

fn big(s: &str) -> Result<BigUint> {
    B64.decode(s)
        .map(|b| BigUint::from_bytes_be(&b))
        .map_err(|e| FormatError::Integrity(format!("bad base64 blob ({e})")))
}

fn level1(params: &GesParams, s: &str) -> Result<Encoding> {
    params
        .import_encoding(1, big(s)?)
        .map_err(|e| FormatError::Integrity(e.to_string()))
}

fn decode_pair(params: &GesParams, p: &[String; 2]) -> Result<EncodingPair> {
    Ok(EncodingPair {
        u: level1(params, &p[0])?,
        v: level1(params, &p[1])?,
    })
}

fn decode_unit(params: &GesParams, u: &[String; 4]) -> Result<EncodingPairUnit> {
    Ok(EncodingPairUnit {
        zero: decode_pair(params, &[u[0].clone(), u[1].clone()])?,
        one: decode_pair(params, &[u[2].clone(), u[3].clone()])?,
    })
}

fn decode_segment(seg: SegmentV1) -> Result<Segment> {
    let public = match seg.public {
        PublicV1::Transparent { modulus } => PublicParams::Transparent(TransparentParams {
            modulus: big(&modulus)?,
        }),
        PublicV1::Clt {
            x0,
            prime_count,
            prime_bits,
            message_bits,
            noise_bits,
            nu,
            h_bits,
        } => PublicParams::Clt(CltPublicParams {
            x0: big(&x0)?,
            primes: prime_count,
            eta: prime_bits,
            alpha_bits: message_bits,
            rho_noise: noise_bits,
            nu,
            h_bits,
            kappa: seg.kappa,
        }),
    };
    let zero_test = match (seg.zero_test, &public) {
        (ZeroTestV1::Transparent, PublicParams::Transparent(_)) => ZeroTestParam::Transparent,
        (
            ZeroTestV1::Clt {
                pzt,
                calibration_margin,
                zero_max_bits,
                nonzero_min_bits,
            },
            PublicParams::Clt(_),
        ) => ZeroTestParam::Clt(CltZeroTest {
            pzt: big(&pzt)?,
            calibration_margin,
            zero_max_bits,
            nonzero_min_bits,
        }),
        _ => {
            return Err(invalid(
                "zero-test parameter and public parameters disagree on the backend",
            ))
        }
    };
    let params = GesParams {
        lambda: seg.lambda,
        kappa: seg.kappa,
        public,
    };
    let units = seg
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| decode_unit(&params, u).map_err(|e| in_item(e, &format!("unit {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Segment {
        params,
        zero_test,
        units,
        bit_offset: seg.bit_offset,
        bit_width: seg.bit_width,
    })
}

fn decode_rule(rule: RuleV1, segments: &[Segment]) -> Result<ObfuscatedRule> {
    if rule.parts.len() != segments.len() {
        return Err(invalid(format!(
            "{} parts for {} segments",
            rule.parts.len(),
            segments.len()
        )));
    }
    let parts = rule
        .parts
        .iter()
        .zip(segments)
        .map(|(part, seg)| {
            let p = &seg.params;
            Ok(match part {
                PartV1::Naive { units, last } => RuleCipher::Naive {
                    units: units
                        .iter()
                        .map(|u| decode_unit(p, u))
                        .collect::<Result<_>>()?,
                    last: decode_pair(p, last)?,
                },
                PartV1::Basic { indices, last } => RuleCipher::Basic {
                    indices: indices.clone(),
                    last: decode_pair(p, last)?,
                },
                PartV1::Blocking { tables, last } => RuleCipher::Blocking {
                    tables: tables
                        .iter()
                        .map(|t| t.iter().map(|x| decode_pair(p, x)).collect::<Result<_>>())
                        .collect::<Result<_>>()?,
                    last: decode_pair(p, last)?,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObfuscatedRule {
        action: parse_action(&rule.action)?,
        parts,
    })
}
