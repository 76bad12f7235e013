"""Training loop with early stopping inside the target accuracy band."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset

from .data import model_inputs
from .model import FashionCNN


class TrainingFailed(RuntimeError):
    pass


def _to_loader(images, labels, batch_size, shuffle, seed=0):
    x = torch.from_numpy(model_inputs(images)).unsqueeze(1)  # (N, 1, 28, 28)
    y = torch.from_numpy(np.ascontiguousarray(labels)).long()
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(TensorDataset(x, y), batch_size=batch_size,
                      shuffle=shuffle, generator=generator, num_workers=0)


@torch.no_grad()
def evaluate(model: FashionCNN, images, labels, batch_size=1024) -> float:
    model.eval()
    correct = 0
    for xb, yb in _to_loader(images, labels, batch_size, shuffle=False):
        correct += int((model(xb).argmax(1) == yb).sum())
    return correct / len(labels)


def train(train_images, train_labels, test_images, test_labels, *,
          epochs=12, batch_size=128, seed=0, lr=1e-3,
          stop_at=0.885, min_accuracy=0.88, log=print) -> tuple:
    """Train until test accuracy enters [stop_at, ...] or epochs run out.

    Returns (model, accuracy). Raises TrainingFailed when the final
    accuracy stays below ``min_accuracy`` (an untrained or diverged run).
    """
    torch.manual_seed(seed)
    np.random.seed(seed)
    model = FashionCNN()
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loader = _to_loader(train_images, train_labels, batch_size, shuffle=True,
                        seed=seed)
    accuracy = evaluate(model, test_images, test_labels)
    log(f"epoch 0 (untrained): test accuracy {accuracy:.4f}")
    for epoch in range(1, epochs + 1):
        model.train()
        running = 0.0
        for step, (xb, yb) in enumerate(loader):
            optimizer.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
        accuracy = evaluate(model, test_images, test_labels)
        log(f"epoch {epoch}: mean loss {running / max(1, len(loader)):.4f}, "
            f"test accuracy {accuracy:.4f}")
        if accuracy >= stop_at:
            break
    if accuracy < min_accuracy:
        raise TrainingFailed(
            f"test accuracy {accuracy:.4f} below the {min_accuracy} threshold")
    return model, accuracy


def save_checkpoint(model: FashionCNN, accuracy: float, seed: int, path):
    torch.save({"state_dict": model.state_dict(), "accuracy": accuracy,
                "seed": seed}, path)


def load_checkpoint(path) -> tuple:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = FashionCNN()
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, float(payload.get("accuracy", 0.0))
