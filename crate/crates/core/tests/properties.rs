use analyst_core::eval::aggregate::{aggregate, round_half_up};
use analyst_core::eval::annotations::{Annotation, Subject};
use analyst_core::eval::cost::{CostModel, SalaryRow};
use analyst_core::eval::Metric;
use analyst_core::insight::parse_bullets;
use analyst_core::plan::{parse_plan, serialize_plan, AnalysisPlan, ChartSpec, ChartType, SortDir};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn cost_is_additive_in_time(salary in 1.0f64..1e6, a in 1.0f64..1e4, b in 1.0f64..1e4) {
        let m = CostModel::default();
        let whole = m.cost_exact(salary, a + b).unwrap();
        let parts = m.cost_exact(salary, a).unwrap() + m.cost_exact(salary, b).unwrap();
        prop_assert!(close(whole, parts));
    }

    #[test]
    fn cost_is_linear_in_salary(salary in 1.0f64..1e6, secs in 1.0f64..1e4, k in 0.01f64..100.0) {
        let m = CostModel::default();
        prop_assert!(close(m.cost_exact(salary * k, secs).unwrap(), k * m.cost_exact(salary, secs).unwrap()));
    }

    #[test]
    fn cost_matches_hand_formula(salary in 1.0f64..1e6, secs in 1.0f64..1e4) {
        let want = salary / (21.0 * 8.0 * 12.0 * 3600.0) * secs;
        let got = SalaryRow::new("s", "l", salary, secs).cost(&CostModel::default()).unwrap();
        prop_assert!((got - want).abs() <= 0.005 + 1e-9);
    }

    #[test]
    fn cost_rejects_non_positive(salary in -1e6f64..=0.0, secs in 1.0f64..1e4) {
        let m = CostModel::default();
        prop_assert!(m.cost_exact(salary, secs).is_err());
        prop_assert!(m.cost_exact(secs, salary).is_err());
    }

    #[test]
    fn rounding_lands_on_grid(x in -1e4f64..1e4) {
        let r = round_half_up(x, 2);
        prop_assert!((r - x).abs() <= 0.005 + 1e-9);
        prop_assert!(((r * 100.0).round() - r * 100.0).abs() < 1e-6);
    }
}

fn annotations() -> impl Strategy<Value = Vec<Annotation>> {
    let metric = proptest::sample::select(Metric::ALL.to_vec());
    proptest::collection::vec((metric, 0usize..6, 0usize..3, 0usize..4, 1usize..6), 1..60).prop_map(|raw| {
        let mut seen = std::collections::BTreeSet::new();
        raw.into_iter()
            .filter_map(|(metric, task, ann, level, bullet)| {
                let subject = match metric.subject() {
                    analyst_core::eval::SubjectKind::Figure => Subject::Figure,
                    analyst_core::eval::SubjectKind::Bullet => Subject::Bullet(bullet),
                };
                let allowed = metric.allowed_values();
                let value = allowed[level % allowed.len()];
                let key = (task, ann, subject.to_string(), metric.as_str());
                seen.insert(key).then(|| Annotation {
                    task_id: format!("t{task}"),
                    annotator_id: format!("a{ann}"),
                    group: format!("g{}", ann % 2),
                    subject,
                    metric,
                    value,
                })
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn aggregation_ignores_row_order(anns in annotations(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = anns.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = analyst_core::eval::aggregate_partial(&anns);
        let b = analyst_core::eval::aggregate_partial(&shuffled);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn group_means_stay_in_metric_range(anns in annotations()) {
        let t = analyst_core::eval::aggregate_partial(&anns);
        for row in &t.rows {
            let max = row.metric.max_value();
            for m in row.group_means.iter().flatten() {
                prop_assert!((0.0..=max).contains(m));
            }
            prop_assert!((0.0..=max).contains(&row.average));
        }
    }

    #[test]
    fn strict_and_partial_agree_when_complete(anns in annotations()) {
        if let Ok(strict) = aggregate(&anns) {
            prop_assert_eq!(strict, analyst_core::eval::aggregate_partial(&anns));
        }
    }
}

fn bullet_text() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 ,%]{0,40}[a-z0-9]".prop_map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
}

proptest! {
    #[test]
    fn bullets_reparse_to_themselves(items in proptest::collection::vec(bullet_text(), 1..=10)) {
        let numbered: String = items.iter().enumerate().map(|(i, b)| format!("{}. {b}\n", i + 1)).collect();
        let parsed = parse_bullets(&numbered).unwrap();
        prop_assert_eq!(&parsed.bullets, &items);
        prop_assert_eq!(parsed.deviation_flag, items.len() != 5);
        let again = parse_bullets(&parsed.to_markdown()).unwrap();
        prop_assert_eq!(again, parsed);
    }

    #[test]
    fn dashed_and_numbered_agree(items in proptest::collection::vec(bullet_text(), 1..=10)) {
        let dashed: String = items.iter().map(|b| format!("- {b}\n")).collect();
        let numbered: String = items.iter().enumerate().map(|(i, b)| format!("{}) {b}\n", i + 1)).collect();
        prop_assert_eq!(parse_bullets(&dashed).unwrap(), parse_bullets(&numbered).unwrap());
    }
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,10}"
}

fn plan() -> impl Strategy<Value = AnalysisPlan> {
    (
        proptest::sample::select(ChartType::ALL.to_vec()),
        ident(),
        proptest::collection::vec(ident(), 1..4),
        ident(),
        proptest::option::of((ident(), any::<bool>())),
    )
        .prop_map(|(t, x, ys, series, sort)| {
            let mut spec = if t == ChartType::Pie || t.needs_series() {
                ChartSpec::new(t, x, &[ys[0].as_str()])
            } else {
                let refs: Vec<&str> = ys.iter().map(String::as_str).collect();
                ChartSpec::new(t, x, &refs)
            };
            if t.needs_series() {
                spec = spec.with_series(series);
            }
            if let Some((by, asc)) = sort {
                spec = spec.with_sort(by, if asc { SortDir::Asc } else { SortDir::Desc });
            }
            let cols: Vec<String> = std::iter::once(spec.x.clone())
                .chain(spec.y.iter().cloned())
                .chain(spec.series.clone())
                .collect();
            AnalysisPlan {
                sql: format!("SELECT {} FROM t", cols.join(", ")),
                chart: spec,
            }
        })
}

proptest! {
    #[test]
    fn plans_round_trip_through_text(p in plan()) {
        prop_assert_eq!(parse_plan(&serialize_plan(&p)).unwrap(), p);
    }

    #[test]
    fn plans_survive_surrounding_prose(p in plan(), before in "[A-Za-z ]{0,30}", after in "[A-Za-z .]{0,30}") {
        let text = format!("{before}\n{}\n{after}", serialize_plan(&p));
        prop_assert_eq!(parse_plan(&text).unwrap(), p);
    }
}
