import numpy as np
import pytest


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_orthonormal(rng, n, k):
    q, _ = np.linalg.qr(crandn(rng, n, k))
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class DeskRun:
    """One full default-config pipeline run, shared by the slow tests."""

    def __init__(self, root):
        import time

        from hybridbf import harness
        self.config = harness.ExperimentConfig()
        self.out = root / "desk"
        t0 = time.perf_counter()
        self.manifest = harness.gen_data(self.config, self.out)
        t1 = time.perf_counter()
        self.net, self.pretrain_history, self.finetune_history = harness.train(self.config,
                                                                               self.out)
        t2 = time.perf_counter()
        self.rows, self.summary = harness.evaluate(self.config, self.out, n_jobs=1)
        t3 = time.perf_counter()
        self.pca_rows, self.pca_summary = harness.embed_pca(self.config, self.out)
        self.seconds = {"gen_data": t1 - t0, "train": t2 - t1, "eval": t3 - t2}


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    return DeskRun(tmp_path_factory.mktemp("acceptance"))
