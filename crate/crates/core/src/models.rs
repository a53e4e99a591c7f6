//! Bundled example models.
//!
//! These are the graphs the CLI exposes as named built-ins, plus a conjugate
//! normal-mean toy whose posterior is known in closed form and therefore
//! anchors the inference test suites.

use crate::graph::{BinaryOp, GraphBuilder, ModelGraph, Root};

/// Exam grades modelled as a Gaussian with unknown mean and spread:
/// `mu ~ Uniform(150, 200)`, `sigma ~ Uniform(5, 25)`, observed grades drawn
/// from `Normal(mu, sigma)`.
pub fn gaussian_grades(replicates: usize) -> ModelGraph {
    let mut b = GraphBuilder::new();
    let mu = b.uniform("mu", 150.0, 200.0);
    let sigma = b.uniform("sigma", 5.0, 25.0);
    let grade = b.normal("grade", mu, sigma);
    b.build(vec![Root::with_replicates(grade, replicates)])
        .expect("gaussian grades graph is valid")
}

/// Hierarchical school model: the budget drives class sizes and teacher
/// counts, which shift final grades around a historical mean. Five free
/// parameters; the observed root redraws per student.
///
/// The budget-to-mean coefficients are illustrative. Only the structure
/// (uniform budget, budget-dependent normal means, the
/// `historical - 0.001 * class_size + 0.02 * teachers` grade formula)
/// is fixed.
pub fn school(replicates: usize) -> ModelGraph {
    let mut b = GraphBuilder::new();
    let budget = b.uniform("school_budget", 1.0, 10.0);

    // More budget buys smaller classes and more teachers.
    let class_mean = {
        let scaled = b.operator_const(BinaryOp::Mul, budget, -2.0);
        b.operator_const(BinaryOp::Add, scaled, 50.0)
    };
    let unit_sd = b.hyperparameter(1.0);
    let class_size = b.normal("class_size", class_mean, unit_sd);

    let teacher_mean = {
        let scaled = b.operator_const(BinaryOp::Mul, budget, 2.0);
        b.operator_const(BinaryOp::Add, scaled, 4.0)
    };
    let no_teacher = b.normal("no_teacher", teacher_mean, unit_sd);

    let historical = b.normal_const("historical_mean_grade", 175.0, 5.0);

    let class_effect = b.operator_const(BinaryOp::Mul, class_size, 0.001);
    let teacher_effect = b.operator_const(BinaryOp::Mul, no_teacher, 0.02);
    let minus_class = b.operator(BinaryOp::Sub, historical, class_effect);
    let grade_mean = b.operator(BinaryOp::Add, minus_class, teacher_effect);

    let spread = b.uniform("grade_spread", 1.0, 10.0);
    let final_grade = b.normal("final_grade", grade_mean, spread);

    b.build(vec![Root::with_replicates(final_grade, replicates)])
        .expect("school graph is valid")
}

/// Conjugate toy: `mu ~ Normal(prior_mean, prior_sd)` observed through
/// `Normal(mu, noise_sd)` with `replicates` draws per dataset. With observed
/// values `x`, the posterior of `mu` is normal with
/// `var = 1 / (1/prior_sd^2 + n/noise_sd^2)` and
/// `mean = var * (prior_mean/prior_sd^2 + sum(x)/noise_sd^2)`.
pub fn normal_mean(prior_mean: f64, prior_sd: f64, noise_sd: f64, replicates: usize) -> ModelGraph {
    let mut b = GraphBuilder::new();
    let mu = b.normal_const("mu", prior_mean, prior_sd);
    let noise = b.hyperparameter(noise_sd);
    let obs = b.normal("obs", mu, noise);
    b.build(vec![Root::with_replicates(obs, replicates)])
        .expect("normal mean graph is valid")
}

/// Analytic posterior (mean, variance) of the [`normal_mean`] model.
pub fn normal_mean_posterior(
    prior_mean: f64,
    prior_sd: f64,
    noise_sd: f64,
    observed: &[f64],
) -> (f64, f64) {
    let prior_prec = 1.0 / (prior_sd * prior_sd);
    let noise_prec = 1.0 / (noise_sd * noise_sd);
    let n = observed.len() as f64;
    let var = 1.0 / (prior_prec + n * noise_prec);
    let mean = var * (prior_mean * prior_prec + observed.iter().sum::<f64>() * noise_prec);
    (mean, var)
}
