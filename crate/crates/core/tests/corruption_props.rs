mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use structrobust::corruption::{
    apply_plan, budget_of_plan, can_simulate, plan_a1, plan_a2_tail_hiding, plan_a3_concentrate,
    plan_a3_unrecoverable, plan_a3_unrecoverable_for, Action, Cell,
};
use structrobust::StructureMatrix;
use structrobust::{AdversaryKind, Budget, CorruptionPlan, Dataset};

const KINDS: [AdversaryKind; 3] = [
    AdversaryKind::SampleLevel,
    AdversaryKind::ValueFraction,
    AdversaryKind::CoordinateFraction,
];

fn dataset(seed: u64, big_n: usize, n: usize) -> Dataset {
    Dataset::new(gaussian_matrix(big_n, n, &mut rng(seed)))
}

/// Integer-valued data, so tail hiding has to break ties.
fn tied_dataset(seed: u64, big_n: usize, n: usize) -> Dataset {
    let mut g = rng(seed);
    Dataset::new(DMatrix::from_fn(big_n, n, |_, _| g.random_range(0..3) as f64))
}

fn budget_strategy() -> impl Strategy<Value = f64> {
    (0u32..=20).prop_map(|k| k as f64 / 20.0)
}

/// A random plan charged to `kind` with budget `beta`, spending as much as it can.
fn random_plan(big_n: usize, n: usize, kind: AdversaryKind, beta: f64, seed: u64) -> CorruptionPlan {
    let mut g = rng(seed);
    let mut cells = Vec::new();
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    match kind {
        AdversaryKind::SampleLevel => {
            for i in rand::seq::index::sample(&mut g, big_n, floor(beta * big_n as f64)) {
                for j in 0..n {
                    if g.random_bool(0.5) {
                        cells.push(Cell { sample: i, coord: j, action: Action::Hide });
                    }
                }
            }
        }
        AdversaryKind::ValueFraction => {
            for j in 0..n {
                let k = g.random_range(0..=floor(beta * big_n as f64));
                for i in rand::seq::index::sample(&mut g, big_n, k) {
                    cells.push(Cell { sample: i, coord: j, action: Action::Replace(g.random()) });
                }
            }
        }
        AdversaryKind::CoordinateFraction => {
            let k = floor(beta * (big_n * n) as f64);
            for c in rand::seq::index::sample(&mut g, big_n * n, k) {
                cells.push(Cell { sample: c / n, coord: c % n, action: Action::Hide });
            }
        }
    }
    CorruptionPlan::new(kind, cells).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn tail_hiding_stays_within_budget(seed: u64, big_n in 1usize..40, n in 1usize..6, rho in budget_strategy(), tied: bool) {
        let ds = if tied { tied_dataset(seed, big_n, n) } else { dataset(seed, big_n, n) };
        let plan = plan_a2_tail_hiding(&ds, rho).unwrap();
        prop_assert!(budget_of_plan(&plan, AdversaryKind::ValueFraction, big_n, n) <= rho + 1e-12);
        prop_assert!(budget_of_plan(&plan, AdversaryKind::CoordinateFraction, big_n, n) <= rho + 1e-12);
        // hidden cells are the smallest of their coordinate
        let hidden = apply_plan(&ds, &plan).unwrap();
        for j in 0..n {
            let kept = hidden.visible_column(j);
            for c in plan.cells().iter().filter(|c| c.coord == j) {
                let v = ds.get(c.sample, j).unwrap();
                prop_assert!(kept.iter().all(|&w| v <= w));
            }
        }
    }

    #[test]
    fn coordinate_plans_stay_within_budget(seed: u64, big_n in 1usize..40, n in 1usize..6, alpha in budget_strategy(), m_a in 1usize..6) {
        prop_assume!(m_a <= n);
        let ds = dataset(seed, big_n, n);
        let conc = plan_a3_concentrate(&ds, alpha).unwrap();
        prop_assert!(budget_of_plan(&conc, AdversaryKind::CoordinateFraction, big_n, n) <= alpha + 1e-12);
        let unrec = plan_a3_unrecoverable(&ds, alpha, m_a, &mut rng(seed ^ 7)).unwrap();
        prop_assert!(budget_of_plan(&unrec, AdversaryKind::CoordinateFraction, big_n, n) <= alpha + 1e-12);
        for i in 0..big_n {
            let d = unrec.cells_per_sample(i);
            prop_assert!(d == 0 || d == m_a);
        }
    }

    #[test]
    fn sample_level_plan_touches_at_most_eps_n(seed: u64, big_n in 1usize..40, n in 1usize..6, eps in budget_strategy()) {
        let ds = dataset(seed, big_n, n);
        let plan = plan_a1(&ds, eps, &vec![10.0; n]).unwrap();
        prop_assert!(budget_of_plan(&plan, AdversaryKind::SampleLevel, big_n, n) <= eps + 1e-12);
    }

    #[test]
    fn apply_plan_leaves_other_cells_bit_exact(seed: u64, big_n in 1usize..30, n in 1usize..6, kind in 0usize..3, beta in budget_strategy()) {
        let ds = dataset(seed, big_n, n);
        let plan = random_plan(big_n, n, KINDS[kind], beta, seed);
        let out = apply_plan(&ds, &plan).unwrap();
        for i in 0..big_n {
            for j in 0..n {
                match plan.cells().iter().find(|c| c.sample == i && c.coord == j) {
                    None => prop_assert_eq!(
                        out.get(i, j).map(f64::to_bits),
                        ds.get(i, j).map(f64::to_bits)
                    ),
                    Some(c) => match c.action {
                        Action::Hide => prop_assert!(out.is_missing(i, j)),
                        Action::Replace(v) => prop_assert_eq!(out.get(i, j), Some(v)),
                    },
                }
            }
        }
    }

    #[test]
    fn can_simulate_is_reflexive(kind in 0usize..3, a in budget_strategy(), b in budget_strategy(), n in 1usize..10) {
        let (ba, bb) = (Budget::new(KINDS[kind], a).unwrap(), Budget::new(KINDS[kind], b).unwrap());
        prop_assert!(can_simulate(ba, ba, n));
        prop_assert_eq!(can_simulate(ba, bb, n), b <= a);
    }

    #[test]
    fn simulation_implies_budget_dominance(
        seed: u64, big_n in 1usize..30, n in 1usize..6,
        ka in 0usize..3, kb in 0usize..3,
        a in budget_strategy(), b in budget_strategy(),
    ) {
        let (ba, bb) = (Budget::new(KINDS[ka], a).unwrap(), Budget::new(KINDS[kb], b).unwrap());
        let plan = random_plan(big_n, n, KINDS[kb], b, seed);
        prop_assert!(budget_of_plan(&plan, KINDS[kb], big_n, n) <= b + 1e-12);
        if can_simulate(ba, bb, n) {
            prop_assert!(budget_of_plan(&plan, KINDS[ka], big_n, n) <= a + 1e-12);
        }
    }

    #[test]
    fn structured_unrecoverable_matches_plain_for_general_position(seed: u64, r in 1usize..4, extra in 1usize..4, beta in budget_strategy()) {
        let n = r + extra;
        let a = general_position(n, r, &mut rng(seed));
        let ds = dataset(seed, 30, n);
        let plain = plan_a3_unrecoverable(&ds, beta, n - r + 1, &mut rng(seed ^ 1)).unwrap();
        let structured = plan_a3_unrecoverable_for(&ds, beta, &a, &mut rng(seed ^ 1)).unwrap();
        prop_assert_eq!(plain, structured);
    }

    #[test]
    fn structured_unrecoverable_victims_lose_rank(seed: u64, beta in budget_strategy()) {
        // two 4 × 2 blocks: m_A = 3 and most 3-subsets leave rank intact
        let mut g = rng(seed);
        let mut m = DMatrix::zeros(8, 4);
        m.view_mut((0, 0), (4, 2)).copy_from(&gaussian_matrix(4, 2, &mut g));
        m.view_mut((4, 2), (4, 2)).copy_from(&gaussian_matrix(4, 2, &mut g));
        let a = StructureMatrix::new(m.clone()).unwrap();
        prop_assert_eq!(a.m_a().unwrap(), 3);
        let ds = dataset(seed, 40, 8);
        let plan = plan_a3_unrecoverable_for(&ds, beta, &a, &mut g).unwrap();
        prop_assert_eq!(plan.touched_samples(), (((beta * 320.0) as usize) / 3).min(40));
        for i in 0..40 {
            let hidden: Vec<usize> = plan.cells().iter().filter(|c| c.sample == i).map(|c| c.coord).collect();
            if hidden.is_empty() {
                continue;
            }
            prop_assert_eq!(hidden.len(), 3);
            let vis = complement(8, &hidden);
            prop_assert!(elimination_rank(&rows_of(&m, &vis), 1e-9) < 4);
        }
    }

    #[test]
    fn plan_csv_round_trips(seed: u64, big_n in 1usize..20, n in 1usize..5, kind in 0usize..3, beta in budget_strategy()) {
        let plan = random_plan(big_n, n, KINDS[kind], beta, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        plan.to_csv_path(&path).unwrap();
        let back = CorruptionPlan::from_csv_path(&path, KINDS[kind]).unwrap();
        prop_assert_eq!(back, plan);
    }
}

#[test]
fn duplicate_cells_are_rejected() {
    let c = Cell { sample: 0, coord: 1, action: Action::Hide };
    assert!(CorruptionPlan::new(AdversaryKind::CoordinateFraction, vec![c, c]).is_err());
}

#[test]
fn out_of_bounds_plan_is_rejected() {
    let ds = dataset(1, 3, 2);
    let plan = CorruptionPlan::new(
        AdversaryKind::CoordinateFraction,
        vec![Cell { sample: 3, coord: 0, action: Action::Hide }],
    )
    .unwrap();
    assert!(apply_plan(&ds, &plan).is_err());
}

#[test]
fn dataset_csv_round_trips_missing_cells() {
    let mut ds = dataset(5, 6, 3);
    let plan = random_plan(6, 3, AdversaryKind::CoordinateFraction, 0.4, 9);
    ds = apply_plan(&ds, &plan).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ds.to_csv_path(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains(",,") || text.lines().any(|l| l.starts_with(',') || l.ends_with(',')));
    let back = Dataset::from_csv_path(&path).unwrap();
    assert_eq!(back.mask(), ds.mask());
    for i in 0..6 {
        assert_eq!(back.row(i), ds.row(i));
    }
}
