// Simulates a small three-process dataset, fits it on the training fold and
// reports prediction errors on the two held-out folds.

#include <svcmle/svcmle.hpp>

#include <cstdio>

int main()
{
    using namespace svcmle;

    const Locations locs = perturbed_grid({10, 0.2}, 42);
    const SimulatedData sim = sample_svc_dataset(locs, TrueModelSpec::sim1(), 42);
    const FoldPartition part = partition(locs, 42);
    const SvcDataset train = sim.data.subset(part.train);

    const FitResult f = fit(train, default_init(train), TaperSpec::none(), simulation_pc_prior(), OptimizerConfig{});
    std::printf("converged %s after %lld iterations, objective %.6f\n", f.converged ? "yes" : "no",
                static_cast<long long>(f.iterations), f.objective);
    for (Index j = 0; j < f.theta.p(); ++j) {
        std::printf("  process %lld: rho %.4f sigma2 %.4f mu %+.4f\n", static_cast<long long>(j + 1),
                    f.theta.svc[j].rho, f.theta.svc[j].sigma2, f.mu.mu[j]);
    }
    std::printf("  nugget %.4f\n", f.theta.nugget);

    const PredictionResult pred = predict(f, train, {locs, sim.data.x}, TaperSpec::none());
    for (Fold fold : {Fold::interpolate, Fold::extrapolate}) {
        std::printf("RMSE(y) %-11s %.4f\n", std::string(to_string(fold)).c_str(),
                    rmse_y(sim.data.y, *pred.y_hat, fold_indices(part, fold)));
    }
}
