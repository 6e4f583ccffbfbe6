from typing import Any, Dict, List

import torch


class ReplayBuffer:
    """Pool of past generator outputs mixed into discriminator updates"""

    def __init__(self, capacity: int, seed: int = 0):
        self.capacity = capacity
        self.stored: List[torch.Tensor] = []
        self.generator = torch.Generator().manual_seed(seed)
        self.swaps = 0
        self.draws = 0

    def __len__(self) -> int:
        return len(self.stored)

    def push_and_pop(self, fresh: torch.Tensor) -> torch.Tensor:
        """
        While filling, stores and returns each fresh image. Once full, each image
        is swapped for a random stored one with probability 1/2.
        """
        fresh = fresh.detach()
        if self.capacity == 0:
            return fresh
        returned = []
        for image in fresh:
            kept = image.cpu().clone()
            if len(self.stored) < self.capacity:
                self.stored.append(kept)
                returned.append(image)
                continue
            self.draws += 1
            if torch.rand((), generator=self.generator).item() < 0.5:
                index = int(torch.randint(self.capacity, (), generator=self.generator).item())
                returned.append(self.stored[index].to(device=image.device, dtype=image.dtype))
                self.stored[index] = kept
                self.swaps += 1
            else:
                returned.append(image)
        return torch.stack(returned)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "capacity": self.capacity,
            "stored": [t.clone() for t in self.stored],
            "generator": self.generator.get_state(),
            "swaps": self.swaps,
            "draws": self.draws,
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.capacity = state["capacity"]
        self.stored = [t.clone() for t in state["stored"]]
        self.generator.set_state(state["generator"])
        self.swaps = state["swaps"]
        self.draws = state["draws"]


def replay_sample(buffer: ReplayBuffer, fresh_fakes: torch.Tensor) -> torch.Tensor:
    return buffer.push_and_pop(fresh_fakes)
