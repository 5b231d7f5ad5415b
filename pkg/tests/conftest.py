import numpy as np
import pytest

from skysweep import instancegen as geninst

VARIANTS = ("basic", "or", "tw", "md", "or-tw", "or-md", "tw-md", "or-tw-md")


def tiny_gen(seed=0, rows=2, cols=2, keep=1.0):
    """A lattice small enough for exhaustive search (<= 4 sites at 2x2)."""
    return geninst.GenConfig(grid_side=rows, grid_cols=cols,
                             prune_keep_fraction=keep,
                             perturb_magnitude=0.2, seed=seed)


def small_gen(seed=0):
    """3x3 lattice, the workhorse size for behavioral tests."""
    return geninst.GenConfig(grid_side=3, grid_cols=3,
                             prune_keep_fraction=0.7,
                             perturb_magnitude=0.3, seed=seed)


def make_instance(variant="basic", seed=0, gen=None, **sample_kwargs):
    attrs = geninst.parse_variant(variant)
    defaults = dict(attributes=attrs, multi_depot=attrs.multi_depot)
    defaults.update(sample_kwargs)
    sample = geninst.SampleConfig(**defaults)
    rng = np.random.default_rng(seed)
    return geninst.generate_instance(gen or small_gen(seed), sample, rng)


def tiny_instance(variant="basic", seed=0, n_drones=(1, 2), time_limits=(2.0, 3.0)):
    """Instance sized for the exhaustive reference (4 junctions, <= 4 sites)."""
    return make_instance(variant, seed, gen=tiny_gen(seed),
                         time_limits=time_limits, n_drones_choices=n_drones,
                         battery_limit=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
