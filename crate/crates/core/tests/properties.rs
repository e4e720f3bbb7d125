use hetnet_core::association::{compute_coefficients, dgp_associate, max_sinr_associate, association_value, DgpOptions};
use hetnet_core::campaign::{empirical_cdf, rate_gain, EmpiricalDistribution};
use hetnet_core::model::{
    derive_load_from_association, opt_resource_allocation, sinr_with, Association, Scenario, Tier,
};
use proptest::prelude::*;

fn scenario_strategy(max_bs: usize, max_users: usize) -> impl Strategy<Value = Scenario> {
    (1..=max_bs, 1..=max_users).prop_flat_map(|(nb, nu)| {
        (
            prop::collection::vec(prop::collection::vec(-12.0f64..-8.0, nu), nb),
            prop::collection::vec(0.5f64..40.0, nb),
            prop::collection::vec(prop::sample::select(vec![1.0, 2.0]), nu),
        )
            .prop_map(move |(g, p, w)| Scenario {
                gains: g.into_iter().map(|row| row.into_iter().map(|e| 10f64.powf(e)).collect()).collect(),
                max_power: p,
                priorities: w,
                noise: 4e-14,
                rb_count: 55,
                rb_bandwidth: 180e3,
                tiers: (0..nb).map(|i| if i == 0 { Tier::Macro } else { Tier::Femto }).collect(),
            })
    })
}

fn association_strategy(nb: usize, nu: usize) -> impl Strategy<Value = Association> {
    prop::collection::vec(0..nb, nu).prop_map(move |s| Association::new(nb, s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn allocation_is_proportional_and_fills_the_load(
        (assoc, w, d) in (1usize..5, 1usize..10).prop_flat_map(|(nb, nu)| (
            association_strategy(nb, nu),
            prop::collection::vec(0.1f64..5.0, nu),
            prop::collection::vec(0.0f64..=1.0, nb),
        ))
    ) {
        let y = opt_resource_allocation(&assoc, &d, &w);
        for i in 0..assoc.num_bs() {
            let users = assoc.served_by(i);
            let total: f64 = users.iter().map(|&j| y[i][j]).sum();
            if users.is_empty() {
                prop_assert_eq!(total, 0.0);
            } else {
                prop_assert!((total - d[i]).abs() < 1e-12);
            }
            for &a in &users {
                for &b in &users {
                    prop_assert!((y[i][a] * w[b] - y[i][b] * w[a]).abs() < 1e-12);
                }
            }
            for j in 0..assoc.num_users() {
                if !assoc.x(i, j) {
                    prop_assert_eq!(y[i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn loads_mark_exactly_the_serving_stations(assoc in (1usize..6, 1usize..12).prop_flat_map(|(nb, nu)| association_strategy(nb, nu))) {
        let d = derive_load_from_association(&assoc);
        for (i, &di) in d.iter().enumerate() {
            let serving = assoc.serving().contains(&i);
            prop_assert_eq!(di, if serving { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn sinr_does_not_grow_with_interfering_load(s in scenario_strategy(4, 3), k in 0usize..4, extra in 0.0f64..1.0) {
        let nb = s.num_bs();
        let k = k % nb;
        let loads = vec![0.5; nb];
        let mut more = loads.clone();
        more[k] = (more[k] + extra).min(1.0);
        for i in (0..nb).filter(|&i| i != k) {
            for j in 0..s.num_users() {
                prop_assert!(sinr_with(&s, &more, &s.max_power, i, j) <= sinr_with(&s, &loads, &s.max_power, i, j));
            }
        }
    }

    #[test]
    fn dgp_never_loses_to_its_incumbent(s in scenario_strategy(4, 8)) {
        let ones = vec![1.0; s.num_bs()];
        let msinr = max_sinr_associate(&s, &ones, &s.max_power);
        let c = compute_coefficients(&s, &ones, &s.max_power);
        let r = dgp_associate(&c, &s.priorities, &DgpOptions::default(), Some(&msinr)).unwrap();
        prop_assert!(r.primal >= association_value(&c, &s.priorities, msinr.serving()) - 1e-12);
        prop_assert!(r.gap >= -1e-9);
    }

    #[test]
    fn cdf_is_monotone_and_matches_counting(samples in prop::collection::vec(0.0f64..1e7, 1..300), grid in prop::collection::vec(-1.0f64..1.1e7, 1..50)) {
        let mut grid = grid;
        grid.sort_by(f64::total_cmp);
        let f = empirical_cdf(&samples, &grid).unwrap();
        prop_assert!(f.windows(2).all(|w| w[1] >= w[0]));
        for (r, v) in grid.iter().zip(&f) {
            let count = samples.iter().filter(|&&s| s <= *r).count() as f64 / samples.len() as f64;
            prop_assert_eq!(*v, count);
        }
    }

    #[test]
    fn quantiles_stay_in_range_and_scale(samples in prop::collection::vec(1.0f64..1e7, 1..300), p in 0.01f64..0.99, k in 0.1f64..10.0) {
        let d = EmpiricalDistribution::new(&samples).unwrap();
        let q = d.quantile(p).unwrap();
        prop_assert!(q >= d.min() && q <= d.max());
        let scaled: Vec<f64> = samples.iter().map(|v| v * k).collect();
        let g = rate_gain(&EmpiricalDistribution::new(&scaled).unwrap(), &d, p).unwrap();
        prop_assert!((g - k).abs() < 1e-9 * k);
    }
}
