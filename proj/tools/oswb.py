"""Reader and writer for the .oswb VGG16 weights container (docs/weights_format.md)."""

import json
import struct

import numpy as np

MAGIC = b"OSVGGW01"
ALIGN = 64

# (name, in_channels, out_channels) for the 13 convolutions, in order.
VGG16_CONVS = []
for _block, (_depth, _cout) in enumerate([(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)], start=1):
    for _i in range(1, _depth + 1):
        _cin = VGG16_CONVS[-1][2] if VGG16_CONVS else 3
        VGG16_CONVS.append((f"conv{_block}_{_i}", _cin, _cout))


def read(path):
    """Returns (tensors: dict name -> float32 ndarray, preprocessing: dict)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise ValueError("corrupt weights file: bad magic")
    (n,) = struct.unpack("<Q", data[8:16])
    manifest = json.loads(data[16 : 16 + n].decode("utf-8"))
    start = 16 + n
    start += (-start) % ALIGN
    blob = data[start:]
    tensors = {}
    for t in manifest["tensors"]:
        raw = blob[t["offset"] : t["offset"] + t["length"]]
        tensors[t["name"]] = np.frombuffer(raw, dtype="<f4").reshape(t["shape"]).copy()
    pre = manifest.get("preprocessing", {"input_side": 224, "mean": [0.485, 0.456, 0.406], "std": [0.229, 0.224, 0.225]})
    return tensors, pre


def write(path, tensors, preprocessing=None):
    """tensors: dict name -> array, written in VGG16 order."""
    entries, chunks, offset = [], [], 0
    for name, cin, cout in VGG16_CONVS:
        for suffix, shape in ((".weight", [cout, cin, 3, 3]), (".bias", [cout])):
            arr = np.ascontiguousarray(tensors[name + suffix], dtype="<f4")
            if list(arr.shape) != shape:
                raise ValueError(f"architecture mismatch: {name + suffix} has shape {list(arr.shape)}, expected {shape}")
            raw = arr.tobytes()
            entries.append({"name": name + suffix, "shape": shape, "offset": offset, "length": len(raw)})
            chunks.append(raw)
            offset += len(raw)
    manifest = {"format": "oneshot-vgg16-weights", "version": 1, "tensors": entries}
    if preprocessing is not None:
        manifest["preprocessing"] = preprocessing
    text = json.dumps(manifest).encode("utf-8")
    head = MAGIC + struct.pack("<Q", len(text)) + text
    head += b"\0" * ((-len(head)) % ALIGN)
    with open(path, "wb") as f:
        f.write(head)
        for c in chunks:
            f.write(c)
