"""Sample a known mixture, refit it from scratch, and compare parameters.

The entropy weight (0.05 here) keeps all probabilities strictly positive but
pulls the recovered Bernoulli parameters slightly toward one half; the table
below shows both the raw recovery error and that systematic pull.
"""
import numpy as np

from mfgmix import FitConfig, MixtureModel, cluster_report, fit, synth_generate

D = 20
mu = np.vstack([np.full(D, 0.8), np.full(D, 0.2)])
truth = MixtureModel(weights=[0.5, 0.5], components=np.stack([1 - mu, mu], axis=-1))

data = synth_generate(truth, 2000, seed=25)
print(f"sampled {data.num_samples} binary vectors of dimension {D} from two components")

result = fit(data, FitConfig(num_components=2, epsilon=0.05, seed=0))
print(f"fit converged={result.converged} after {result.iterations} iterations")

report = cluster_report(result.responsibilities, data)
cluster_of_class = np.argsort(report.permutation)
mu_hat = result.model.bernoulli_parameters()[cluster_of_class]
alpha_hat = result.model.weights[cluster_of_class]

print(f"\ncluster -> component matching: {report.permutation.tolist()}")
print(f"aligned diagonal mean: {report.diagonal_mean:.4f}")
print(f"\nweights: true (0.5, 0.5), recovered ({alpha_hat[0]:.4f}, {alpha_hat[1]:.4f})")
print("\ncoordinate   true mu   recovered   error")
for d in range(0, D, 4):
    for k in range(2):
        print(f"  ({k},{d:>2})      {mu[k, d]:.2f}      {mu_hat[k, d]:.4f}     "
              f"{mu_hat[k, d] - mu[k, d]:+.4f}")
print(f"\nworst-entry recovery error: {np.abs(mu_hat - mu).max():.4f}")
print("(the consistent sign of the error is the entropy pull toward 1/2)")
