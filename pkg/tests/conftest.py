import pytest

from gemkit.config import ExperimentConfig, StreamSpec, SyntheticSource


@pytest.fixture
def tiny_config_factory():
    """Small, fast experiment configs for harness-level tests."""

    def make(method="VAN", epsilon=None, total_tasks=3, cv_tasks=0, seeds=(0,), **overrides):
        fields = dict(
            method=method,
            stream=StreamSpec(
                kind="permuted",
                total_tasks=total_tasks,
                cv_tasks=cv_tasks,
                seed=11,
                base=SyntheticSource(classes=5, dim=12, per_class=40, seed=7, test_per_class=20),
            ),
            hidden_dims=(32,),
            lr=0.1,
            batch_size=10,
            seeds=tuple(seeds),
            mem_per_class=10,
            ref_batch_size=64,
            epsilon=epsilon,
        )
        fields.update(overrides)
        return ExperimentConfig(**fields)

    return make
