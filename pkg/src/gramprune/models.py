"""Manifest builders for standard reference architectures.

Layers describe inference-time graphs: normalization is folded into the
preceding convolution (hence bias flags), pooling and activations carry no
entries of their own and only show up as spatial changes between layers.
Add junctions list the shortcut path first and the residual path second.
"""

from __future__ import annotations

from .formats import LayerSpec, ModelManifest


def _conv(lid, cin, cout, spatial, preds, k=3, stride=1, prunable=True, bias=True):
    return LayerSpec(
        id=lid, kind="conv", in_channels=cin, out_channels=cout,
        kernel_h=k, kernel_w=k, stride_h=stride, stride_w=stride,
        out_spatial_h=spatial, out_spatial_w=spatial, has_bias=bias,
        predecessors=tuple(preds), prunable=prunable,
    )


def _linear(lid, cin, cout, preds, prunable=False):
    return LayerSpec(
        id=lid, kind="linear", in_channels=cin, out_channels=cout,
        out_spatial_h=1, out_spatial_w=1, has_bias=True,
        predecessors=tuple(preds), prunable=prunable,
    )


def _add(lid, channels, spatial, preds):
    return LayerSpec(
        id=lid, kind="add-junction", in_channels=channels, out_channels=channels,
        out_spatial_h=spatial, out_spatial_w=spatial,
        predecessors=tuple(preds), prunable=False,
    )


def _concat(lid, cin, spatial, preds):
    return LayerSpec(
        id=lid, kind="concat-junction", in_channels=cin, out_channels=cin,
        out_spatial_h=spatial, out_spatial_w=spatial,
        predecessors=tuple(preds), prunable=False,
    )


def vgg16_cifar(num_classes: int = 10) -> ModelManifest:
    """13 conv layers plus a 512-wide hidden classifier, 32x32 inputs."""
    widths = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512]
    spatials = [32, 32, 16, 16, 8, 8, 8, 4, 4, 4, 2, 2, 2]
    layers: list[LayerSpec] = []
    cin, prev = 3, []
    for i, (w, s) in enumerate(zip(widths, spatials), start=1):
        lid = f"conv{i}"
        layers.append(_conv(lid, cin, w, s, prev))
        cin, prev = w, [lid]
    layers.append(_linear("fc1", 512, 512, prev))
    layers.append(_linear("fc2", 512, num_classes, ["fc1"]))
    return ModelManifest(model_name="vgg16-cifar", layers=tuple(layers),
                         input_shape=(3, 32, 32))


def _resnet_basic_cifar(name: str, blocks_per_stage: int,
                        num_classes: int = 10) -> ModelManifest:
    layers: list[LayerSpec] = [_conv("conv1", 3, 16, 32, [], prunable=False)]
    prev = "conv1"
    widths = [16, 32, 64]
    spatials = [32, 16, 8]
    cin = 16
    for s_idx, (w, sp) in enumerate(zip(widths, spatials), start=1):
        for b in range(blocks_per_stage):
            tag = f"s{s_idx}b{b + 1}"
            stride = 2 if (b == 0 and s_idx > 1) else 1
            c1 = f"{tag}_conv1"
            c2 = f"{tag}_conv2"
            layers.append(_conv(c1, cin, w, sp, [prev], stride=stride))
            layers.append(_conv(c2, w, w, sp, [c1]))
            if b == 0 and cin != w:
                proj = f"{tag}_proj"
                layers.append(_conv(proj, cin, w, sp, [prev], k=1, stride=stride,
                                    prunable=False))
                shortcut = proj
            else:
                shortcut = prev
            add = f"{tag}_add"
            layers.append(_add(add, w, sp, [shortcut, c2]))
            prev, cin = add, w
    layers.append(_linear("fc", 64, num_classes, [prev]))
    return ModelManifest(model_name=name, layers=tuple(layers),
                         input_shape=(3, 32, 32))


def resnet56_cifar(num_classes: int = 10) -> ModelManifest:
    return _resnet_basic_cifar("resnet56-cifar", 9, num_classes)


def resnet110_cifar(num_classes: int = 10) -> ModelManifest:
    return _resnet_basic_cifar("resnet110-cifar", 18, num_classes)


# (n1x1, n3x3red, n3x3, n5x5red, n5x5, pool_planes) per inception module;
# the 5x5 branch is realized as two stacked 3x3 convolutions.
_GOOGLENET_MODULES = [
    ("a3", 192, (64, 96, 128, 16, 32, 32), 32),
    ("b3", 256, (128, 128, 192, 32, 96, 64), 32),
    ("c4", 480, (192, 96, 208, 16, 48, 64), 16),
    ("d4", 512, (160, 112, 224, 24, 64, 64), 16),
    ("e4", 512, (128, 128, 256, 24, 64, 64), 16),
    ("f4", 512, (112, 144, 288, 32, 64, 64), 16),
    ("g4", 528, (256, 160, 320, 32, 128, 128), 16),
    ("a5", 832, (256, 160, 320, 32, 128, 128), 8),
    ("b5", 832, (384, 192, 384, 48, 128, 128), 8),
]


def googlenet_cifar(num_classes: int = 10) -> ModelManifest:
    layers: list[LayerSpec] = [_conv("pre", 3, 192, 32, [])]
    prev = "pre"
    for tag, cin, (n1, n3r, n3, n5r, n5, pp), sp in _GOOGLENET_MODULES:
        b1 = f"{tag}_b1"
        layers.append(_conv(b1, cin, n1, sp, [prev], k=1))
        b2r = f"{tag}_b2red"
        b2 = f"{tag}_b2"
        layers.append(_conv(b2r, cin, n3r, sp, [prev], k=1))
        layers.append(_conv(b2, n3r, n3, sp, [b2r]))
        b3r = f"{tag}_b3red"
        b3a = f"{tag}_b3a"
        b3b = f"{tag}_b3b"
        layers.append(_conv(b3r, cin, n5r, sp, [prev], k=1))
        layers.append(_conv(b3a, n5r, n5, sp, [b3r]))
        layers.append(_conv(b3b, n5, n5, sp, [b3a]))
        b4 = f"{tag}_b4pool"
        layers.append(_conv(b4, cin, pp, sp, [prev], k=1))
        cat = f"{tag}_cat"
        out = n1 + n3 + n5 + pp
        layers.append(_concat(cat, out, sp, [b1, b2, b3b, b4]))
        prev = cat
    layers.append(_linear("fc", 1024, num_classes, [prev]))
    return ModelManifest(model_name="googlenet-cifar", layers=tuple(layers),
                         input_shape=(3, 32, 32))


def resnet50_imagenet(num_classes: int = 1000) -> ModelManifest:
    """Bottleneck ResNet, stride carried by each block's 3x3 convolution."""
    layers: list[LayerSpec] = [
        _conv("conv1", 3, 64, 112, [], k=7, stride=2, prunable=False)
    ]
    prev = "conv1"
    cin = 64
    stages = [(3, 64, 56, 56), (4, 128, 56, 28), (6, 256, 28, 14), (3, 512, 14, 7)]
    for s_idx, (blocks, w, sp_in, sp_out) in enumerate(stages, start=1):
        for b in range(blocks):
            tag = f"s{s_idx}b{b + 1}"
            first = b == 0
            sp1 = sp_in if first else sp_out
            stride = 2 if (first and sp_in != sp_out) else 1
            c1, c2, c3 = f"{tag}_conv1", f"{tag}_conv2", f"{tag}_conv3"
            layers.append(_conv(c1, cin, w, sp1, [prev], k=1))
            layers.append(_conv(c2, w, w, sp_out, [c1], stride=stride))
            layers.append(_conv(c3, w, 4 * w, sp_out, [c2], k=1))
            if first:
                proj = f"{tag}_proj"
                layers.append(_conv(proj, cin, 4 * w, sp_out, [prev], k=1,
                                    stride=stride, prunable=False))
                shortcut = proj
            else:
                shortcut = prev
            add = f"{tag}_add"
            layers.append(_add(add, 4 * w, sp_out, [shortcut, c3]))
            prev, cin = add, 4 * w
    layers.append(_linear("fc", 2048, num_classes, [prev]))
    return ModelManifest(model_name="resnet50-imagenet", layers=tuple(layers),
                         input_shape=(3, 224, 224))


REFERENCE_MODELS = {
    "vgg16-cifar": vgg16_cifar,
    "resnet56-cifar": resnet56_cifar,
    "resnet110-cifar": resnet110_cifar,
    "googlenet-cifar": googlenet_cifar,
    "resnet50-imagenet": resnet50_imagenet,
}
