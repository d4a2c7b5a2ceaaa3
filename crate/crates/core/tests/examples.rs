// Every capability example compiles into this test and runs end to end.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $name;

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(phantom_generation, "../examples/phantom_generation.rs");
example!(label_cleanup, "../examples/label_cleanup.rs");
example!(mip_projection, "../examples/mip_projection.rs");
example!(loss_terms, "../examples/loss_terms.rs");
example!(sliding_window, "../examples/sliding_window.rs");
example!(metrics_evaluation, "../examples/metrics_evaluation.rs");
example!(crossval_split, "../examples/crossval_split.rs");
example!(train_checkpoint, "../examples/train_checkpoint.rs");
