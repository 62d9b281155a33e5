mod common;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = common::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

property_tests!(
    matmul_associative,
    activations_monotone,
    rng_reproducible,
    prepare_keeps_mask_structure,
    split_partitions,
    conv_length_and_range,
    conv_depthwise_and_local,
    gru_gate_ranges_and_bound,
    gru_convex_combination,
    gru_deterministic,
    softmax_normalized,
    loss_nonnegative,
    batch_gradient_is_mean,
    auroc_monotone_invariant,
    auroc_complement,
    auprc_bounds,
    imputation_keeps_observed,
    knn_self_neighbour,
    intervals_nonnegative,
    training_deterministic,
    early_stop_keeps_best,
    no_test_leakage,
);

#[test]
fn every_property_is_wired() {
    assert_eq!(common::all().len(), 22);
}
