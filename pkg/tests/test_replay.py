import torch

from pathogan.services.replay import ReplayBuffer, replay_sample


def _batch(value: float, size: int = 2) -> torch.Tensor:
    return torch.full((size, 1, 2, 2), value)


def test_zero_capacity_passes_through():
    buffer = ReplayBuffer(0)
    fresh = _batch(1.0)
    assert torch.equal(buffer.push_and_pop(fresh), fresh)
    assert len(buffer) == 0


def test_filling_returns_fresh_images():
    buffer = ReplayBuffer(4)
    assert torch.equal(buffer.push_and_pop(_batch(1.0)), _batch(1.0))
    assert torch.equal(buffer.push_and_pop(_batch(2.0)), _batch(2.0))
    assert len(buffer) == 4
    assert buffer.draws == 0


def test_full_buffer_swaps_about_half():
    buffer = ReplayBuffer(4, seed=0)
    buffer.push_and_pop(_batch(0.0, 4))
    for step in range(1, 501):
        out = buffer.push_and_pop(_batch(float(step)))
        for image in out:
            # either the fresh image or one stored before this call
            assert float(image[0, 0, 0]) <= step
    assert buffer.draws == 1000
    assert 400 < buffer.swaps < 600
    assert len(buffer) == 4


def test_output_is_detached():
    fresh = torch.ones((2, 1, 2, 2), requires_grad=True) * 2
    assert not replay_sample(ReplayBuffer(1), fresh).requires_grad


def test_state_round_trip():
    buffer = ReplayBuffer(3, seed=5)
    for step in range(4):
        buffer.push_and_pop(_batch(float(step)))
    restored = ReplayBuffer(0)
    restored.load_state_dict(buffer.state_dict())
    assert restored.capacity == 3
    assert restored.swaps == buffer.swaps
    for step in range(4, 10):
        assert torch.equal(buffer.push_and_pop(_batch(float(step))), restored.push_and_pop(_batch(float(step))))
