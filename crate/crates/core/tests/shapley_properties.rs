mod common;

use ccbank::ccshap::{aggregate, cc_shap, ratios, DEFAULT_EPSILON};
use ccbank::oracle::{CountingOracle, Oracle, ToyModel, TOY_VOCAB};
use ccbank::shapley::{exact_shapley, permutation_budget, permutation_shapley, EstimatorConfig};
use ccbank::types::{AttributionVector, PromptLayout, SpanRole, Token, TokenId};
use common::reference_shapley;
use proptest::prelude::*;

fn layout(ids: &[TokenId]) -> PromptLayout {
    let mut tokens = vec![Token::new(10, ":")];
    let mut roles = vec![SpanRole::Scaffold];
    for &id in ids {
        tokens.push(Token::new(id, ToyModel::surface(id)));
        roles.push(SpanRole::TaskInput);
    }
    tokens.push(Token::new(6, "."));
    roles.push(SpanRole::Scaffold);
    PromptLayout::from_parts(tokens, roles).unwrap()
}

fn ids(max: usize) -> impl Strategy<Value = Vec<TokenId>> {
    prop::collection::vec(1..TOY_VOCAB as TokenId, 1..=max)
}

fn target() -> impl Strategy<Value = TokenId> {
    1..TOY_VOCAB as TokenId
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_reference(ids in ids(7), t in target()) {
        let toy = ToyModel::new();
        let l = layout(&ids);
        let v = exact_shapley(&toy, &l, &[t], 0, 12).unwrap();
        prop_assert!(max_diff(&v.phi, &reference_shapley(&toy, &l, t)) < 1e-9);
    }

    #[test]
    fn efficiency_holds_for_both_estimators(ids in ids(8), t in target(), m in 1usize..6, seed in any::<u64>()) {
        let toy = ToyModel::new();
        let l = layout(&ids);
        let e = exact_shapley(&toy, &l, &[t], 0, 12).unwrap();
        let p = permutation_shapley(&toy, &l, &[t], 0, &EstimatorConfig::permutation(m, seed)).unwrap();
        prop_assert!(e.efficiency_gap() <= 1e-9);
        prop_assert!(p.efficiency_gap() <= 1e-9);
        prop_assert!((e.base_value - p.base_value).abs() < 1e-15);
        prop_assert!((e.explained_value - p.explained_value).abs() < 1e-15);
    }

    #[test]
    fn permutation_budget_is_respected(ids in ids(8), t in target(), m in 1usize..5, seed in any::<u64>()) {
        let toy = ToyModel::new();
        let counting = CountingOracle::new(&toy);
        let l = layout(&ids);
        permutation_shapley(&counting, &l, &[t], 0, &EstimatorConfig::permutation(m, seed)).unwrap();
        prop_assert!(counting.calls() as usize <= permutation_budget(ids.len(), m));
    }

    #[test]
    fn enumerating_all_orderings_is_exact(ids in ids(5), t in target()) {
        let toy = ToyModel::new();
        let l = layout(&ids);
        let fact: usize = (1..=ids.len()).product();
        let e = exact_shapley(&toy, &l, &[t], 0, 12).unwrap();
        let p = permutation_shapley(&toy, &l, &[t], 0, &EstimatorConfig::permutation(fact, 3)).unwrap();
        prop_assert!(max_diff(&e.phi, &p.phi) < 1e-9);
    }

    #[test]
    fn dummy_token_gets_zero(ids in ids(6), t in target(), pos in 0usize..6) {
        // id 40 carries no weight in this model, so it never moves the output
        let toy = ToyModel::new().with_row(40, [0.0; TOY_VOCAB]);
        let mut ids = ids;
        let pos = pos % (ids.len() + 1);
        ids.insert(pos, 40);
        let v = exact_shapley(&toy, &layout(&ids), &[t], 0, 12).unwrap();
        prop_assert!(v.phi[pos].abs() < 1e-12);
    }

    #[test]
    fn identical_tokens_share_credit(ids in ids(5), t in target()) {
        let mut ids = ids;
        ids.push(ids[0]);
        let v = exact_shapley(&ToyModel::new(), &layout(&ids), &[t], 0, 12).unwrap();
        prop_assert!((v.phi[0] - v.phi[ids.len() - 1]).abs() < 1e-12);
    }

    #[test]
    fn cc_shap_is_scale_invariant(
        a in prop::collection::vec(-1.0f64..1.0, 1..10),
        seed in any::<u64>(),
        c in 0.01f64..100.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assume!(a.iter().map(|x| x.abs()).sum::<f64>() > 1e-6);
        let profile = |phi: Vec<f64>| {
            let v = AttributionVector { base_value: 0.0, explained_value: phi.iter().sum(), phi };
            aggregate(&[ratios(&v, DEFAULT_EPSILON)]).unwrap()
        };
        let plain = cc_shap(&profile(a.clone()), &profile(b.clone())).unwrap();
        let scaled = cc_shap(&profile(a.iter().map(|x| x * c).collect()), &profile(b)).unwrap();
        prop_assert!((plain - scaled).abs() < 1e-9);
    }
}

#[test]
fn additivity_across_games() {
    // Two scripted games with additive values; the Shapley values of their
    // sum are the sums of their Shapley values.
    use ccbank::oracle::ScriptedOracle;
    use ccbank::types::{build_layout, Segment};
    let words = ["red", "green", "blue", "cyan"];
    let game = |w: [f64; 4], base: f64| {
        ScriptedOracle::new(
            move |ctx, _| {
                base + ctx
                    .iter()
                    .filter_map(|t| words.iter().position(|x| *x == t.text.trim()))
                    .map(|i| w[i])
                    .sum::<f64>()
            },
            |_, _| String::new(),
        )
    };
    let (wa, wb) = ([0.1, -0.05, 0.02, 0.0], [0.03, 0.07, -0.01, 0.04]);
    let sum: [f64; 4] = std::array::from_fn(|i| wa[i] + wb[i]);
    let phi = |o: &ScriptedOracle| {
        let l = build_layout(o, &[Segment::scaffold("Q:"), Segment::input(" red green blue cyan")]).unwrap();
        let t = o.tokenize(" x").unwrap()[0].id;
        exact_shapley(o, &l, &[t], 0, 12).unwrap().phi
    };
    let (a, b, s) = (phi(&game(wa, 0.3)), phi(&game(wb, 0.2)), phi(&game(sum, 0.5)));
    for i in 0..4 {
        assert!((a[i] + b[i] - s[i]).abs() < 1e-12);
        assert!((s[i] - sum[i]).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_error_shrinks_with_budget() {
    let toy = ToyModel::new();
    let (ids, t) = ([21u32, 33, 47, 52, 19, 60, 27, 44], 23u32);
    let l = layout(&ids);
    let exact = reference_shapley(&toy, &l, t);
    let mae = |m: usize| {
        (0..100u64)
            .map(|seed| {
                let v = permutation_shapley(&toy, &l, &[t], 0, &EstimatorConfig::permutation(m, seed)).unwrap();
                v.phi.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() / ids.len() as f64
            })
            .sum::<f64>()
            / 100.0
    };
    let errs: Vec<f64> = [1, 2, 4, 8, 16].into_iter().map(mae).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}
