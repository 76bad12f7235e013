"""The float network: conv 32x3x3 / conv 48x3x3 / dense 24 / dense 10.

Same padding keeps 28x28 through the convolutions; two 2x2 max-poolings
bring the feature map to 7x7x48 = 2,352 features. 70,914 trainable
parameters total.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


class FashionCNN(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 32, 3, padding=1)
        self.conv2 = nn.Conv2d(32, 48, 3, padding=1)
        self.fc1 = nn.Linear(48 * 7 * 7, 24)
        self.fc2 = nn.Linear(24, 10)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        return self.fc2(x)

    def forward_preacts(self, x: torch.Tensor) -> dict:
        """Pre-activation tensors at each quantization point."""
        c1 = self.conv1(x)
        p1 = F.max_pool2d(F.relu(c1), 2)
        c2 = self.conv2(p1)
        p2 = F.max_pool2d(F.relu(c2), 2)
        d1 = self.fc1(torch.flatten(p2, 1))
        d2 = self.fc2(F.relu(d1))
        return {"conv1": c1, "conv2": c2, "dense1": d1, "dense2": d2}

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
