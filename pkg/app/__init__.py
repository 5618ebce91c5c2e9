import numpyro

# Likelihood and link identities are checked at 1e-10, which needs float64 in jax.
numpyro.enable_x64()
