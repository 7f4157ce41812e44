//! Measure graphs over a small grid, fit the mean and spread estimators and
//! compare them with the published constants.

use eta_diffusion::distmodel::{
    compare_baselines, discretize, fit_model_constants, fit_normal, measure_grid, model_bias_report, FitOptions,
    ModelConstants, ModelId, NormalParams, DEFAULT_EPSILON,
};
use eta_diffusion::graph::{generate_k_growing, pooled_histogram, SourceSample};

fn main() -> eta_diffusion::Result<()> {
    let cells: Vec<(usize, usize)> = [300, 600, 1000]
        .iter()
        .flat_map(|&n| [2, 4, 6].map(|k| (n, k)))
        .collect();
    let data = measure_grid(&cells, &[1, 2])?;

    for model in [ModelId::M2, ModelId::S] {
        let fit = fit_model_constants(&data, model, &FitOptions::default())?;
        let published = if model.predicts_sigma() { ModelConstants::published_sigma() } else { ModelConstants::published_mu() };
        let ours = model_bias_report(&data, &fit.constants)?;
        let theirs = model_bias_report(&data, &published)?;
        println!(
            "{model}: rms residual {:.4}, median |bias| fitted {:.4} vs published {:.4}",
            fit.residual_std, ours.median_abs, theirs.median_abs
        );
    }

    let (n, k) = (1000, 6);
    let h = pooled_histogram(&generate_k_growing(n, k, 7)?, SourceSample::All)?;
    let measured = fit_normal(&h)?;
    let predicted = NormalParams::estimate(n, k, &ModelConstants::published_mu(), &ModelConstants::published_sigma())?;
    println!("n = {n}, k = {k}: measured {measured:?}, predicted {predicted:?}");

    println!("baseline families by squared error:");
    let mut baselines = compare_baselines(&h)?;
    baselines.sort_by(|a, b| a.sse.total_cmp(&b.sse));
    for b in baselines {
        println!("  {:<10} sse {:.3e}", format!("{:?}", b.kind), b.sse);
    }

    let disc = discretize(predicted, n, k, DEFAULT_EPSILON)?;
    println!("discretized to t_max = {}: {:.4?}", disc.t_max(), disc.mass());
    Ok(())
}
