"""Five-block residual classifier with an exposed final-convolution capture point.

The architecture follows the classic residual layout: a strided stem (conv1),
four residual stages (conv2..conv5), global average pooling, dropout and a
fully connected head.  ``forward_features`` returns the post-activation output
of the last convolutional stage, which is the capture point the severity
quantification differentiates against.

Serialized model files are a ``torch.save`` dict::

    {"arch": {"num_classes", "width", "blocks_per_stage", "dropout"},
     "state_dict": <module state dict>}
"""

from pathlib import Path

import torch
import torch.nn as nn

BLOCK_NAMES = ("conv1", "conv2", "conv3", "conv4", "conv5", "fc")


def xavier_init(module):
    """Xavier-initialize conv/linear weights; zero the biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False), nn.BatchNorm2d(out_ch)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class ResidualClassifier(nn.Module):
    def __init__(self, num_classes=2, width=16, blocks_per_stage=(1, 1, 1, 1), dropout=0.0):
        super().__init__()
        self.num_classes = num_classes
        self.width = width
        self.blocks_per_stage = tuple(blocks_per_stage)
        self.dropout_rate = dropout

        self.conv1 = nn.Sequential(
            nn.Conv2d(3, width, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        chans = [width, width * 2, width * 4, width * 8]
        stages = []
        in_ch = width
        for stage, (out_ch, n_blocks) in enumerate(zip(chans, self.blocks_per_stage)):
            blocks = []
            for b in range(n_blocks):
                stride = 2 if (b == 0 and stage > 0) else 1
                blocks.append(ResidualBlock(in_ch, out_ch, stride=stride))
                in_ch = out_ch
            stages.append(nn.Sequential(*blocks))
        self.conv2, self.conv3, self.conv4, self.conv5 = stages
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        # whitens the pooled features so a freshly replaced head trains well
        # within the fast-decaying schedule even from uncalibrated backbones
        self.bn_head = nn.BatchNorm1d(in_ch)
        self.dropout = nn.Dropout(dropout)
        self.fc = nn.Linear(in_ch, num_classes)
        xavier_init(self)

    def forward_features(self, x):
        """Activations of the last convolutional stage, shape (n, C, h, w)."""
        x = self.conv1(x)
        x = self.conv2(x)
        x = self.conv3(x)
        x = self.conv4(x)
        return self.conv5(x)

    def head(self, features):
        """Classifier head on captured feature maps; returns logits."""
        x = self.avgpool(features).flatten(1)
        return self.fc(self.dropout(self.bn_head(x)))

    def forward(self, x):
        return self.head(self.forward_features(x))

    def block_modules(self):
        """Mapping from block name to the modules that belong to it."""
        return {
            "conv1": [self.conv1],
            "conv2": [self.conv2],
            "conv3": [self.conv3],
            "conv4": [self.conv4],
            "conv5": [self.conv5],
            "fc": [self.bn_head, self.dropout, self.fc],
        }

    def replace_fc(self, num_classes):
        """Swap in a fresh Xavier-initialized head with ``num_classes`` outputs."""
        self.fc = nn.Linear(self.fc.in_features, num_classes)
        nn.init.xavier_uniform_(self.fc.weight)
        nn.init.zeros_(self.fc.bias)
        self.num_classes = num_classes
        return self


def build_base_model(width=16, blocks_per_stage=(1, 1, 1, 1), dropout=0.0, num_classes=2, seed=0):
    """Construct a seeded base network.

    Stands in for a network carrying general-image pretrained weights when no
    weight file is available; real weights load via ``load_model``.
    """
    torch.manual_seed(seed)
    return ResidualClassifier(
        num_classes=num_classes, width=width, blocks_per_stage=blocks_per_stage, dropout=dropout
    )


def save_model(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "arch": {
                "num_classes": model.num_classes,
                "width": model.width,
                "blocks_per_stage": list(model.blocks_per_stage),
                "dropout": model.dropout_rate,
            },
            "state_dict": model.state_dict(),
        },
        path,
    )
    return path


def load_model(path):
    payload = torch.load(path, map_location="cpu", weights_only=True)
    arch = payload["arch"]
    model = ResidualClassifier(
        num_classes=arch["num_classes"],
        width=arch["width"],
        blocks_per_stage=tuple(arch["blocks_per_stage"]),
        dropout=arch["dropout"],
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
