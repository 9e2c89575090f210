use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use mediator_core::datarecon::{
    apply_transformation, parse_expression, FormatDb, MediationDb, Message, UnitConversion, UnitDb,
};
use mediator_core::matchmaker::{MatchConfig, PatternDatabase};
use mediator_core::ontology::Ontology;
use mediator_core::pipeline::{compile, CompileInputs};
use mediator_core::procmodel::ProcessModel;
use mediator_core::registry::Registry;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rust_decimal::Decimal;

fn ratio(digits: &str) -> BigRational {
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let num = BigInt::from_str(&format!("{int}{frac}")).unwrap();
    BigRational::new(num, BigInt::from(10u32).pow(frac.len() as u32))
}

fn dec_ratio(d: Decimal) -> BigRational {
    ratio(&d.to_string())
}

/// Half-away-from-zero rounding to six places, rendered without trailing zeros.
fn round6(r: &BigRational) -> String {
    let scale = BigInt::from(1_000_000u32);
    let scaled = r * BigRational::from_integer(scale.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let n = if scaled.is_negative() {
        -((-scaled) + half).floor()
    } else {
        (scaled + half).floor()
    }
    .to_integer();
    let neg = n.is_negative();
    let abs = n.abs();
    let (q, rem) = (&abs / &scale, &abs % &scale);
    let mut s = q.to_string();
    if !rem.is_zero() {
        let frac = format!("{:06}", rem.to_u64().unwrap());
        s = format!("{s}.{}", frac.trim_end_matches('0'));
    }
    if neg && s != "0" {
        s.insert(0, '-');
    }
    s
}

// ---- expressions against exact rational arithmetic ----

enum Node {
    Num(String),
    Var,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
}

fn gen_node(rng: &mut StdRng, depth: u32) -> Node {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.3) {
            Node::Var
        } else {
            let int = rng.gen_range(0..100);
            match rng.gen_range(0..3) {
                0 => Node::Num(int.to_string()),
                dp => Node::Num(format!(
                    "{int}.{:0width$}",
                    rng.gen_range(0..10u32.pow(dp)),
                    width = dp as usize
                )),
            }
        };
    }
    if rng.gen_bool(0.1) {
        return Node::Neg(Box::new(gen_node(rng, depth - 1)));
    }
    let op = ['+', '-', '*', '/'][rng.gen_range(0..4)];
    Node::Bin(
        op,
        Box::new(gen_node(rng, depth - 1)),
        Box::new(gen_node(rng, depth - 1)),
    )
}

fn render(n: &Node, comma: bool) -> String {
    match n {
        Node::Num(s) if comma => s.replace('.', ","),
        Node::Num(s) => s.clone(),
        Node::Var => "{#x}".into(),
        Node::Neg(inner) => format!("-({})", render(inner, comma)),
        Node::Bin(op, l, r) => {
            let op = if *op == '*' && comma { '×' } else { *op };
            format!("({} {op} {})", render(l, comma), render(r, comma))
        }
    }
}

/// Exact value, or `None` on division by zero; tracks the largest magnitude seen.
fn exact(n: &Node, x: &BigRational, peak: &mut f64) -> Option<BigRational> {
    let v = match n {
        Node::Num(s) => ratio(s),
        Node::Var => x.clone(),
        Node::Neg(inner) => -exact(inner, x, peak)?,
        Node::Bin(op, l, r) => {
            let (l, r) = (exact(l, x, peak), exact(r, x, peak));
            let (l, r) = (l?, r?);
            match op {
                '+' => l + r,
                '-' => l - r,
                '*' => l * r,
                _ if r.is_zero() => return None,
                _ => l / r,
            }
        }
    };
    *peak = peak.max(v.abs().to_f64().unwrap_or(f64::INFINITY));
    Some(v)
}

#[test]
fn evaluation_matches_rational_oracle() {
    let mut rng = StdRng::seed_from_u64(31);
    let mut checked = 0;
    for _ in 0..1000 {
        let tree = gen_node(&mut rng, 4);
        let text = render(&tree, rng.gen_bool(0.5));
        let expr = parse_expression(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        let x = Decimal::new(rng.gen_range(-10_000..10_000), 2);
        let mut peak = 0.0;
        match (exact(&tree, &dec_ratio(x), &mut peak), expr.evaluate(x)) {
            (None, Err(e)) => assert_eq!(e.to_string(), "division by zero", "{text}"),
            (None, Ok(v)) => panic!("{text} at {x}: expected division by zero, got {v}"),
            (Some(_), Err(e)) => {
                assert!(
                    e.to_string().contains("overflow") && peak > 1e27,
                    "{text} at {x}: {e}"
                )
            }
            (Some(want), Ok(got)) => {
                let err = (dec_ratio(got) - &want).abs().to_f64().unwrap();
                let tol = 5e-7 + want.abs().to_f64().unwrap() * 1e-26;
                assert!(
                    err <= tol,
                    "{text} at {x}: got {got}, exact {}",
                    round6(&want)
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 800, "only {checked} finite evaluations");
}

proptest! {
    #[test]
    fn comma_and_dot_literals_agree(int in 0u32..10_000, frac in 0u32..1000, x in -1000i64..1000) {
        let dot = parse_expression(&format!("{{#v}} * {int}.{frac:03} + 1.5")).unwrap();
        let comma = parse_expression(&format!("{{#v}} × {int},{frac:03} + 1,5")).unwrap();
        let x = Decimal::from(x);
        prop_assert_eq!(dot.evaluate(x).unwrap(), comma.evaluate(x).unwrap());
    }
}

// ---- formats ----

/// Digit width from a `([0-9]{n})` part pattern.
fn width(pattern: &str) -> usize {
    let open = pattern.find('{').expect("fixed-width pattern");
    let close = pattern[open..].find('}').unwrap() + open;
    pattern[open + 1..close].parse().unwrap()
}

#[test]
fn shipped_formats_round_trip() {
    let db = MediationDb::defaults();
    let mut rng = StdRng::seed_from_u64(41);
    let decs: Vec<_> = db.formats.iter().collect();
    assert!(decs.len() >= 3);
    for i in 0..1000 {
        let d = decs[i % decs.len()];
        let parts: BTreeMap<String, String> = d
            .decomposition()
            .parts
            .iter()
            .map(|p| {
                let w = width(&p.pattern);
                (
                    p.concept.clone(),
                    (0..w)
                        .map(|_| char::from(b'0' + rng.gen_range(0..10)))
                        .collect(),
                )
            })
            .collect();
        let value = d.assemble(&parts).unwrap();
        assert_eq!(d.parse(&value).unwrap(), parts);
        assert_eq!(d.assemble(&d.parse(&value).unwrap()).unwrap(), value);
    }
}

#[test]
fn separator_delimited_formats_round_trip() {
    let db = FormatDb::from_json(
        r#"{"decompositions":[{"composite":{"concept":"Name","format":"LastFirst"},
            "parts":[{"concept":"Last","pattern":"([A-Za-z]+)"},{"concept":"First","pattern":"([A-Za-z]+)"}],
            "template":"{#Last}, {#First}"}]}"#,
    )
    .unwrap();
    let d = db.iter().next().unwrap();
    let mut rng = StdRng::seed_from_u64(42);
    let word = |rng: &mut StdRng| -> String {
        (0..rng.gen_range(1..10))
            .map(|_| char::from(b'a' + rng.gen_range(0..26)))
            .collect()
    };
    for _ in 0..1000 {
        let value = format!("{}, {}", word(&mut rng), word(&mut rng));
        assert_eq!(d.assemble(&d.parse(&value).unwrap()).unwrap(), value);
    }
}

// ---- unit conversions ----

#[test]
fn linear_conversions_invert() {
    let mut rng = StdRng::seed_from_u64(51);
    let mut conversions: Vec<UnitConversion> = MediationDb::defaults()
        .units
        .conversions()
        .cloned()
        .collect();
    for i in 0..20 {
        let a = loop {
            let a = rng.gen_range(-5000i64..5000);
            if a != 0 {
                break a;
            }
        };
        conversions.push(UnitConversion {
            from: format!("U{i}"),
            to: format!("V{i}"),
            expression: format!(
                "{{#U{i}}} * {} + {}",
                Decimal::new(a, 3),
                Decimal::new(rng.gen_range(-9999..9999), 2)
            ),
        });
    }
    let units = UnitDb::from_conversions(conversions.clone()).unwrap();
    for (n, c) in conversions.iter().cycle().take(1000).enumerate() {
        let fwd = parse_expression(
            &units
                .derive_unit_step(&c.from, &c.to)
                .unwrap()
                .unwrap()
                .expression,
        )
        .unwrap();
        let back = parse_expression(
            &units
                .derive_unit_step(&c.to, &c.from)
                .unwrap()
                .unwrap()
                .expression,
        )
        .unwrap();
        let x = Decimal::new(rng.gen_range(-1_000_000..1_000_000), 3);
        let round = back.evaluate_exact(fwd.evaluate_exact(x).unwrap()).unwrap();
        assert!(
            (round - x).abs() <= Decimal::new(1, 9),
            "#{n} {}: {x} -> {round}",
            c.expression
        );
    }
}

// ---- transformation application on the sensor scenario ----

fn sensor_spec() -> mediator_core::datarecon::TransformationSpec {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/sensor");
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
    let process = ProcessModel::from_json(&read("process.json")).unwrap();
    let registry = Registry::from_json(&read("registry.json")).unwrap();
    let ontology = Ontology::from_json(&read("ontology.json")).unwrap();
    let mediation = MediationDb::defaults();
    let config = MatchConfig::default();
    let criteria = BTreeMap::new();
    let inputs = CompileInputs {
        process: &process,
        registry: &registry,
        ontology: &ontology,
        mediation: &mediation,
        config: &config,
        criteria: &criteria,
    };
    let mut out = compile(&inputs, &mut PatternDatabase::new(), 0).unwrap();
    out.specs.remove("RecordValue-sensor-db.record").unwrap()
}

#[test]
fn sensor_transformation_matches_oracle() {
    let spec = sensor_spec();
    let mut rng = StdRng::seed_from_u64(61);
    let targets: Vec<String> = spec.target_tags().into_iter().map(String::from).collect();
    for _ in 0..1000 {
        let (y, mo, d) = (
            rng.gen_range(1900..2100),
            rng.gen_range(1..=12),
            rng.gen_range(1..=28),
        );
        let (h, mi, s) = (
            rng.gen_range(0..24),
            rng.gen_range(0..60),
            rng.gen_range(0..60),
        );
        let celsius = Decimal::new(rng.gen_range(-50_000..150_000), rng.gen_range(0..=3));
        let shown = if rng.gen_bool(0.3) {
            celsius.to_string().replace('.', ",")
        } else {
            celsius.to_string()
        };
        let msg: Message = [
            ("DateUS".to_string(), format!("{mo:02}-{d:02}-{y}")),
            ("Time".to_string(), format!("{h:02}:{mi:02}:{s:02}")),
            ("SensorTempC".to_string(), shown),
        ]
        .into_iter()
        .collect();
        let out = apply_transformation(&spec, &msg).unwrap();
        assert_eq!(out.keys().cloned().collect::<Vec<_>>(), targets);
        assert_eq!(
            out["Datetime"],
            format!("{y}-{mo:02}-{d:02} {h:02}:{mi:02}:{s:02}")
        );
        let fahrenheit = dec_ratio(celsius) * ratio("1.8") + ratio("32");
        assert_eq!(out["Value"], round6(&fahrenheit), "{celsius} C");
        assert_eq!(apply_transformation(&spec, &msg).unwrap(), out);
    }
}
