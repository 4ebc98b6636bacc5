use dielq_core::resonance::{bandwidth_grid, synth_s21};
use dielq_core::trace_io::{
    extract_trace, parse_touchstone, write_touchstone, DataFormat, FrequencyUnit, NetworkPoint,
    OptionLine, SParameter, TouchstoneDocument,
};
use dielq_core::{Complex64, ResonatorModel};
use proptest::prelude::*;

const PARAMS: [SParameter; 4] = [SParameter::S11, SParameter::S21, SParameter::S12, SParameter::S22];

fn rel_close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * b.norm().max(f64::MIN_POSITIVE)
}

fn unit_strategy() -> impl Strategy<Value = FrequencyUnit> {
    prop_oneof![
        Just(FrequencyUnit::Hz),
        Just(FrequencyUnit::KHz),
        Just(FrequencyUnit::MHz),
        Just(FrequencyUnit::GHz),
    ]
}

fn complex_strategy() -> impl Strategy<Value = Complex64> {
    (1e-6f64..2.0, -std::f64::consts::PI..std::f64::consts::PI).prop_map(|(m, a)| Complex64::from_polar(m, a))
}

prop_compose! {
    fn document()(
        unit in unit_strategy(),
        ohm in prop_oneof![Just(50.0), Just(75.0), 1.0f64..1000.0],
        start in 1e6f64..2e10,
        steps in prop::collection::vec(1e-3f64..1e6, 1..40),
        comment in "[ -~]{0,30}",
    )(
        values in prop::collection::vec(prop::array::uniform4(complex_strategy()), steps.len() + 1),
        unit in Just(unit),
        ohm in Just(ohm),
        start in Just(start),
        steps in Just(steps),
        comment in Just(comment),
    ) -> TouchstoneDocument {
        let mut f = start;
        let mut points = Vec::new();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                f += steps[i - 1];
            }
            points.push(NetworkPoint { frequency_hz: f, s: [[v[0], v[2]], [v[1], v[3]]] });
        }
        TouchstoneDocument {
            option_line: OptionLine { unit, format: DataFormat::RI, reference_ohm: ohm },
            points,
            comments: vec![comment],
        }
    }
}

/// Emits rows in an arbitrary data format, ordered N11 N21 N12 N22.
fn write_in_format(points: &[NetworkPoint], format: DataFormat) -> String {
    let mut out = format!("! generated\n# Hz S {format} R 50\n");
    for p in points {
        out.push_str(&format!("{:.17e}", p.frequency_hz));
        for parameter in PARAMS {
            let (a, b) = format.encode(p.get(parameter));
            out.push_str(&format!(" {a:.17e} {b:.17e}"));
        }
        out.push('\n');
    }
    out
}

/// Places a decimal point `shift` digits from the right of an integer literal.
fn shift_decimal(digits: &str, shift: usize) -> String {
    let padded = format!("{digits:0>width$}", width = shift + 1);
    let (int, frac) = padded.split_at(padded.len() - shift);
    if frac.is_empty() {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    }
}

#[test]
fn synthetic_trace_round_trip() {
    let model = ResonatorModel {
        f_res: 7.2e9,
        q_loaded: 1e5,
        amplitude: 0.7,
        detuning_angle: 0.3,
        background: Complex64::new(0.01, 0.0),
    };
    let trace = synth_s21(&model, &bandwidth_grid(&model, 5.0, 1001), 1e-3, 1).unwrap();
    let points: Vec<NetworkPoint> = trace
        .iter()
        .map(|(f, z)| NetworkPoint {
            frequency_hz: f,
            s: [[Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)], [z, Complex64::new(0.0, 0.0)]],
        })
        .collect();
    let doc = TouchstoneDocument {
        option_line: OptionLine::default(),
        points,
        comments: vec![],
    };
    let back = extract_trace(&parse_touchstone(&write_touchstone(&doc)).unwrap(), "S21").unwrap();
    assert_eq!(back.len(), 1001);
    for ((f0, z0), (f1, z1)) in trace.iter().zip(back.iter()) {
        assert!(((f1 - f0) / f0).abs() <= 1e-12);
        assert!(rel_close(z1, z0, 1e-12));
    }
}

#[test]
fn db_input_reemitted_as_ri() {
    let text = "# MHz S DB R 50\n7200 -6.0206 90 -3 45 -3 45 -40 0\n";
    let doc = parse_touchstone(text).unwrap();
    let again = parse_touchstone(&write_touchstone(&doc)).unwrap();
    assert_eq!(again.option_line.format, DataFormat::RI);
    for parameter in PARAMS {
        assert!(rel_close(again.points[0].get(parameter), doc.points[0].get(parameter), 1e-12));
    }
    assert!((doc.points[0].get(SParameter::S11) - Complex64::new(0.0, 0.5)).norm() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parse_write_identity(doc in document()) {
        let text = write_touchstone(&doc);
        let back = parse_touchstone(&text).unwrap();
        prop_assert_eq!(back.points.len(), doc.points.len());
        prop_assert_eq!(back.option_line.unit, doc.option_line.unit);
        prop_assert_eq!(back.option_line.reference_ohm, doc.option_line.reference_ohm);
        prop_assert_eq!(&back.comments, &doc.comments);
        for (a, b) in back.points.iter().zip(&doc.points) {
            prop_assert!(((a.frequency_hz - b.frequency_hz) / b.frequency_hz).abs() <= 1e-12);
            for parameter in PARAMS {
                prop_assert!(rel_close(a.get(parameter), b.get(parameter), 1e-12));
            }
        }
        // A second pass is a fixed point of the text.
        prop_assert_eq!(write_touchstone(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn format_equivariance(doc in document()) {
        let ri = parse_touchstone(&write_in_format(&doc.points, DataFormat::RI)).unwrap();
        for format in [DataFormat::MA, DataFormat::DB] {
            let other = parse_touchstone(&write_in_format(&doc.points, format)).unwrap();
            prop_assert_eq!(other.option_line.format, format);
            for (a, b) in other.points.iter().zip(&ri.points) {
                prop_assert_eq!(a.frequency_hz, b.frequency_hz);
                for parameter in PARAMS {
                    prop_assert!(rel_close(a.get(parameter), b.get(parameter), 1e-10));
                }
            }
        }
    }

    #[test]
    fn unit_equivariance(
        start_hz in 1_000_000u64..40_000_000_000,
        steps in prop::collection::vec(1u64..10_000_000, 2..20),
        value in complex_strategy(),
    ) {
        let mut freqs = vec![start_hz];
        for s in &steps {
            freqs.push(freqs.last().unwrap() + s);
        }
        let row_tail = format!(" 0 0 {:.17e} {:.17e} 0 0 0 0\n", value.re, value.im);
        let mut traces = Vec::new();
        for (unit, shift) in [("Hz", 0), ("kHz", 3), ("MHz", 6), ("GHz", 9)] {
            let mut text = format!("# {unit} S RI R 50\n");
            for f in &freqs {
                text.push_str(&shift_decimal(&f.to_string(), shift));
                text.push_str(&row_tail);
            }
            traces.push(extract_trace(&parse_touchstone(&text).unwrap(), "S21").unwrap());
        }
        for t in &traces[1..] {
            prop_assert_eq!(t.frequencies(), traces[0].frequencies());
            prop_assert_eq!(t.values(), traces[0].values());
        }
        prop_assert_eq!(traces[0].frequencies()[0], start_hz as f64);
    }
}
