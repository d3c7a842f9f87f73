import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uqid import sources as src

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def overlap_mixture():
    """The k=2 family used throughout the acceptance criteria."""
    fam = src.MixtureFamily(
        (src.Uniform(0.0, 1.0), src.Uniform(0.5, 1.5)),
        src.Support(0.0, 1.5),
        name="unif-overlap",
    )
    src.validate_family(fam)
    return fam


@pytest.fixture(scope="session")
def disjoint_mixture():
    fam = src.MixtureFamily(
        (src.Uniform(0.0, 1.0), src.Uniform(2.0, 3.0)),
        src.Support(0.0, 3.0),
        name="unif-disjoint",
    )
    src.validate_family(fam)
    return fam


@pytest.fixture(scope="session")
def mixture3():
    fam = src.MixtureFamily(
        (
            src.Uniform(0.0, 1.0),
            src.TruncatedGaussian(0.5, 0.2, 0.0, 1.0),
            src.Triangular(0.0, 0.3, 1.0),
        ),
        src.Support(0.0, 1.0),
        name="mixed3",
    )
    src.validate_family(fam)
    return fam


@pytest.fixture(scope="session")
def linear_expfam():
    fam = src.ExpFamily(
        reference=src.Uniform(0.0, 1.0),
        stats=(src.Poly((0.0, 1.0)),),
        theta_box=((-1.0, 1.0),),
        support=src.Support(0.0, 1.0),
        name="exp-linear",
    )
    src.validate_family(fam)
    return fam


@pytest.fixture(scope="session")
def expfam2():
    fam = src.ExpFamily(
        reference=src.Uniform(0.0, 1.0),
        stats=(src.Poly((0.0, 1.0)), src.Cos(3.0)),
        theta_box=((-0.5, 0.5), (-0.5, 0.5)),
        support=src.Support(0.0, 1.0),
        name="exp-2d",
    )
    src.validate_family(fam)
    return fam


@pytest.fixture(scope="session")
def quad15(overlap_mixture):
    return src.default_grid(overlap_mixture)


def random_simplex(rng, k):
    return rng.dirichlet(np.ones(k))
