use std::collections::BTreeMap;

use cape_core::store::{ingest_frontier, ingest_losses, ingest_table};
use cape_core::{FrontierRecord, LossPoint, ModelRecord, Panel, PanelMetadata, TableFormat, CORE_BENCHMARKS};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = ModelRecord> {
    (
        "[a-z][a-z0-9-]{0,6}",
        "[a-z][a-z0-9,.\"-]{0,10}",
        1e-3f64..1e3,
        proptest::option::of(64u32..16384),
        proptest::option::of(1u32..128),
        proptest::collection::vec(0.2f64..=1.0, 5),
        proptest::collection::vec("[a-z]{1,5}", 0..3),
    )
        .prop_map(|(family, name, params, d_model, n_layers, scores, tags)| ModelRecord {
            family,
            name,
            params,
            d_model,
            n_layers,
            scores: CORE_BENCHMARKS.iter().map(|b| b.to_string()).zip(scores).collect(),
            tags,
        })
}

fn panel() -> impl Strategy<Value = Panel> {
    proptest::collection::vec(record(), 1..12).prop_filter_map("duplicate (family, name)", |recs| {
        Panel::new(recs, vec![], BTreeMap::new(), PanelMetadata::default()).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn base_table_round_trips(p in panel()) {
        let once = ingest_table(&p.records_to_csv(), TableFormat::Csv).unwrap();
        prop_assert_eq!(&once.records, &p.records);
        let twice = ingest_table(&once.records_to_csv(), TableFormat::Csv).unwrap();
        prop_assert_eq!(once.records, twice.records);
    }

    #[test]
    fn row_order_does_not_matter(p in panel(), seed in any::<u64>()) {
        let csv = p.records_to_csv();
        let mut lines: Vec<&str> = csv.lines().collect();
        let header = lines.remove(0);
        // Deterministic shuffle by key; sorting by a hash is enough here.
        lines.sort_by_key(|l| l.bytes().fold(seed, |h, b| h.rotate_left(5) ^ b as u64));
        let shuffled = std::iter::once(header).chain(lines).collect::<Vec<_>>().join("\n");
        prop_assert_eq!(ingest_table(&shuffled, TableFormat::Csv).unwrap().records, p.records);
    }

    #[test]
    fn percent_columns_land_in_unit_interval(p in panel()) {
        let mut csv = String::from("family,name,params_b,d_model,n_layers,hellaswag,truthfulqa_mc1,arc,winogrande,mmlu,tags\n");
        for r in &p.records {
            let s: Vec<String> = CORE_BENCHMARKS.iter().map(|b| format!("{}", r.scores[*b] * 100.0)).collect();
            csv.push_str(&format!("f,{}x,{},,,{},\n", r.family, r.params, s.join(",")));
        }
        let q = ingest_table(&csv, TableFormat::Csv);
        // Rebuilt names collide when two source families share a name.
        prop_assume!(q.is_ok());
        let q = q.unwrap();
        for r in &q.records {
            for v in r.scores.values() {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
        prop_assert!(!q.metadata.notes.is_empty());
    }

    #[test]
    fn frontier_and_losses_round_trip(
        rows in proptest::collection::vec(("[a-z]{1,6}", "[a-z0-9-]{1,8}", 0.0f64..=1.0, 0.0f64..=1.0, proptest::option::of(0.0f64..=1.0)), 1..10),
        losses in proptest::collection::vec((0.01f64..100.0, 1.0f64..4.0, proptest::option::of(0.1f64..10.0)), 1..10),
    ) {
        let frontier: Vec<FrontierRecord> = rows
            .into_iter()
            .map(|(lab, model, swe, gpqa, ifeval)| FrontierRecord { lab, model, swe, gpqa, ifeval, release_date: Some("2024-05-01".into()) })
            .collect();
        let mut loss_map = BTreeMap::new();
        loss_map.insert("fam".to_string(), losses.into_iter().map(|(params, loss, grad_norm)| LossPoint { params, loss, grad_norm }).collect::<Vec<_>>());
        let p = Panel::new(vec![], frontier, loss_map, PanelMetadata::default()).unwrap();
        let (f, _) = ingest_frontier(&p.frontier_to_csv(), TableFormat::Csv).unwrap();
        prop_assert_eq!(f, p.frontier.clone());
        let l = ingest_losses(&p.losses_to_csv(), TableFormat::Csv).unwrap();
        prop_assert_eq!(l, p.losses.clone());
    }
}
