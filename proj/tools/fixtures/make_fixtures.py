"""Regenerates the checkpoint fixtures under tests/data/.

Needs torch and the reference `segment_anything` package on PYTHONPATH.
The outputs are committed, so this only has to run when the fixtures change.

    PYTHONPATH=/path/to/segment_anything python3 tools/fixtures/make_fixtures.py tests/data
"""
import sys
from functools import partial
from pathlib import Path

import torch
from segment_anything.modeling.image_encoder import ImageEncoderViT

TINY = dict(img_size=256, patch_size=16, in_chans=3, embed_dim=64, depth=2,
            num_heads=2, mlp_ratio=4.0, out_chans=64, qkv_bias=True,
            norm_layer=partial(torch.nn.LayerNorm, eps=1e-6),
            act_layer=torch.nn.GELU, use_abs_pos=True, use_rel_pos=True,
            rel_pos_zero_init=True, window_size=6, global_attn_indexes=(1,))


def sam_fixture(out: Path) -> None:
    torch.manual_seed(1234)
    enc = ImageEncoderViT(**TINY).eval()
    with torch.no_grad():
        for name, p in enc.named_parameters():
            if "rel_pos" in name or name == "pos_embed":
                p.normal_(0.0, 0.2)
            elif name.endswith("bias") and "neck" not in name:
                p.normal_(0.0, 0.05)
    state = {"image_encoder." + k: v.clone() for k, v in enc.state_dict().items()}
    # Prompt-side entries a full SAM archive carries; the importer must skip them.
    state["prompt_encoder.pe_layer.positional_encoding_gaussian_matrix"] = torch.randn(2, 32)
    state["mask_decoder.iou_token.weight"] = torch.randn(1, 64)
    torch.save(state, out / "sam_tiny_vit.pth")

    image = torch.randn(1, 3, 256, 256)
    with torch.no_grad():
        ref = enc(image)
    torch.save({"input": image, "output": ref}, out / "sam_tiny_reference.pth")


def timm_fixture(out: Path) -> None:
    # timm VisionTransformer naming, ViT-style cls token, 8x8 pretraining grid.
    torch.manual_seed(99)
    dim, depth, grid = 64, 2, 8
    state = {
        "cls_token": torch.randn(1, 1, dim) * 0.02,
        "pos_embed": torch.randn(1, 1 + grid * grid, dim) * 0.02,
        "patch_embed.proj.weight": torch.randn(dim, 3, 16, 16) * 0.02,
        "patch_embed.proj.bias": torch.zeros(dim),
        "norm.weight": torch.ones(dim),
        "norm.bias": torch.zeros(dim),
        "head.weight": torch.randn(10, dim) * 0.02,
        "head.bias": torch.zeros(10),
    }
    for i in range(depth):
        p = f"blocks.{i}."
        state[p + "norm1.weight"] = torch.ones(dim)
        state[p + "norm1.bias"] = torch.zeros(dim)
        state[p + "attn.qkv.weight"] = torch.randn(3 * dim, dim) * 0.05
        state[p + "attn.qkv.bias"] = torch.zeros(3 * dim)
        state[p + "attn.proj.weight"] = torch.randn(dim, dim) * 0.05
        state[p + "attn.proj.bias"] = torch.zeros(dim)
        state[p + "norm2.weight"] = torch.ones(dim)
        state[p + "norm2.bias"] = torch.zeros(dim)
        state[p + "mlp.fc1.weight"] = torch.randn(4 * dim, dim) * 0.05
        state[p + "mlp.fc1.bias"] = torch.zeros(4 * dim)
        state[p + "mlp.fc2.weight"] = torch.randn(dim, 4 * dim) * 0.05
        state[p + "mlp.fc2.bias"] = torch.zeros(dim)
    torch.save({"model": state}, out / "vit_tiny_timm.pth")


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
    out.mkdir(parents=True, exist_ok=True)
    sam_fixture(out)
    timm_fixture(out)
