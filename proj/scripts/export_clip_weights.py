#!/usr/bin/env python3
"""Exports OpenCLIP ViT-B/16 weights and class-name embeddings into the
runtime's .scwt container, and converts VOC-style datasets into the P6/P5
files the CLI reads.

Requires: torch, open_clip_torch, numpy, pillow (only for convert-voc).

    # 1. weights + class embeddings for the 20 VOC foreground classes
    python3 scripts/export_clip_weights.py export --output voc20.scwt

    # 2. images to .ppm, annotations to .pgm (background/void become 255)
    python3 scripts/export_clip_weights.py convert-voc \
        --voc-root VOCdevkit/VOC2012 --split val --output voc20_data

    # 3. score it
    ./build/tools/csaseg eval --model voc20.scwt \
        --images voc20_data/images --gt voc20_data/gt --mode csa

Expected mean IoU on the VOC 2012 val split with these defaults: roughly 80
with --mode csa and roughly 49 with --mode vanilla (a few tenths of spread
comes from image decoding differences).
"""

import argparse
import struct
import sys
from pathlib import Path

VOC20_CLASSES = [
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
]

# the 80 standard prompt templates used for zero-shot classification
PROMPT_TEMPLATES = [
    "a bad photo of a {}.", "a photo of many {}.", "a sculpture of a {}.",
    "a photo of the hard to see {}.", "a low resolution photo of the {}.",
    "a rendering of a {}.", "graffiti of a {}.", "a bad photo of the {}.",
    "a cropped photo of the {}.", "a tattoo of a {}.", "the embroidered {}.",
    "a photo of a hard to see {}.", "a bright photo of a {}.",
    "a photo of a clean {}.", "a photo of a dirty {}.",
    "a dark photo of the {}.", "a drawing of a {}.", "a photo of my {}.",
    "the plastic {}.", "a photo of the cool {}.", "a close-up photo of a {}.",
    "a black and white photo of the {}.", "a painting of the {}.",
    "a painting of a {}.", "a pixelated photo of the {}.",
    "a sculpture of the {}.", "a bright photo of the {}.",
    "a cropped photo of a {}.", "a plastic {}.", "a photo of the dirty {}.",
    "a jpeg corrupted photo of a {}.", "a blurry photo of the {}.",
    "a photo of the {}.", "a good photo of the {}.", "a rendering of the {}.",
    "a {} in a video game.", "a photo of one {}.", "a doodle of a {}.",
    "a close-up photo of the {}.", "a photo of a {}.", "the origami {}.",
    "the {} in a video game.", "a sketch of a {}.", "a doodle of the {}.",
    "a origami {}.", "a low resolution photo of a {}.", "the toy {}.",
    "a rendition of the {}.", "a photo of the clean {}.",
    "a photo of a large {}.", "a rendition of a {}.",
    "a photo of a nice {}.", "a photo of a weird {}.",
    "a blurry photo of a {}.", "a cartoon {}.", "art of a {}.",
    "a sketch of the {}.", "a embroidered {}.", "a pixelated photo of a {}.",
    "itap of the {}.", "a jpeg corrupted photo of the {}.",
    "a good photo of a {}.", "a plushie {}.", "a photo of the nice {}.",
    "a photo of the small {}.", "a photo of the weird {}.",
    "the cartoon {}.", "art of the {}.", "a drawing of the {}.",
    "a photo of the large {}.", "a black and white photo of a {}.",
    "the plushie {}.", "a dark photo of a {}.", "itap of a {}.",
    "graffiti of the {}.", "a toy {}.", "itap of my {}.",
    "a photo of a cool {}.", "a photo of a small {}.", "a tattoo of the {}.",
]


def write_entry(out, name: str, dtype: int, dims, payload: bytes) -> None:
    out.write(struct.pack("<H", len(name)) + name.encode("utf-8"))
    out.write(struct.pack("<BB", dtype, len(dims)))
    for d in dims:
        out.write(struct.pack("<I", d))
    out.write(payload)


def write_f32(out, name: str, array) -> None:
    import numpy as np

    a = np.ascontiguousarray(array, dtype="<f4")
    write_entry(out, name, 0, list(a.shape), a.tobytes())


def tensor(t):
    return t.detach().cpu().float().numpy()


def export_weights(args) -> None:
    import numpy as np
    import open_clip
    import torch

    model, _, _ = open_clip.create_model_and_transforms(args.model, pretrained=args.pretrained)
    model.eval()
    tokenizer = open_clip.get_tokenizer(args.model)
    v = model.visual

    d = v.conv1.weight.shape[0]
    patch = v.conv1.weight.shape[2]
    heads = v.transformer.resblocks[0].attn.num_heads
    grid = int(round((v.positional_embedding.shape[0] - 1) ** 0.5))
    hidden = v.transformer.resblocks[0].mlp.c_fc.weight.shape[0]
    mlp_ratio = hidden / d

    class_names = args.classes.split(",") if args.classes else VOC20_CLASSES
    with torch.no_grad():
        embeds = []
        for name in class_names:
            prompts = tokenizer([t.format(name) for t in PROMPT_TEMPLATES])
            e = model.encode_text(prompts)
            e = e / e.norm(dim=-1, keepdim=True)
            mean = e.mean(dim=0)
            embeds.append(mean / mean.norm())
        class_embeds = torch.stack(embeds).float().numpy()

    with open(args.output, "wb") as out:
        n_entries = 7 + len(v.transformer.resblocks) * 16 + 5
        out.write(b"SCWT" + struct.pack("<II", 1, n_entries))
        write_f32(out, "config",
                  np.array([patch, heads, grid, grid, mlp_ratio], dtype="<f4"))
        # the convolutional patch embedding flattens channel-major, which is
        # exactly the runtime's patch row layout; no bias in this backbone
        write_f32(out, "patch_proj.weight", tensor(v.conv1.weight).reshape(d, -1))
        write_f32(out, "patch_proj.bias", np.zeros(d, dtype="<f4"))
        write_f32(out, "cls_token", tensor(v.class_embedding))
        write_f32(out, "pos_embed", tensor(v.positional_embedding))
        write_f32(out, "pre_norm.gain", tensor(v.ln_pre.weight))
        write_f32(out, "pre_norm.bias", tensor(v.ln_pre.bias))
        for i, blk in enumerate(v.transformer.resblocks):
            b = f"blocks.{i}."
            write_f32(out, b + "norm1.gain", tensor(blk.ln_1.weight))
            write_f32(out, b + "norm1.bias", tensor(blk.ln_1.bias))
            # torch linear layers compute y = x @ W.T; the attention entries
            # are stored in math convention y = x @ W, hence the transposes
            w_in = tensor(blk.attn.in_proj_weight)
            b_in = tensor(blk.attn.in_proj_bias)
            write_f32(out, b + "attn.w_q", w_in[0 * d:1 * d].T)
            write_f32(out, b + "attn.b_q", b_in[0 * d:1 * d])
            write_f32(out, b + "attn.w_k", w_in[1 * d:2 * d].T)
            write_f32(out, b + "attn.b_k", b_in[1 * d:2 * d])
            write_f32(out, b + "attn.w_v", w_in[2 * d:3 * d].T)
            write_f32(out, b + "attn.b_v", b_in[2 * d:3 * d])
            write_f32(out, b + "attn.w_o", tensor(blk.attn.out_proj.weight).T)
            write_f32(out, b + "attn.b_o", tensor(blk.attn.out_proj.bias))
            write_f32(out, b + "norm2.gain", tensor(blk.ln_2.weight))
            write_f32(out, b + "norm2.bias", tensor(blk.ln_2.bias))
            # mlp entries keep the torch [out, in] layout; the runtime
            # multiplies by their transpose
            write_f32(out, b + "mlp_in.weight", tensor(blk.mlp.c_fc.weight))
            write_f32(out, b + "mlp_in.bias", tensor(blk.mlp.c_fc.bias))
            write_f32(out, b + "mlp_out.weight", tensor(blk.mlp.c_proj.weight))
            write_f32(out, b + "mlp_out.bias", tensor(blk.mlp.c_proj.bias))
        write_f32(out, "final_norm.gain", tensor(v.ln_post.weight))
        write_f32(out, "final_norm.bias", tensor(v.ln_post.bias))
        write_f32(out, "visual_proj", tensor(v.proj))
        write_f32(out, "class_embeds", class_embeds)
        names_blob = "\n".join(class_names).encode("utf-8")
        write_entry(out, "class_names", 1, [len(names_blob)], names_blob)
    print(f"wrote {args.output}: {args.model}/{args.pretrained}, "
          f"{len(class_names)} classes, patch {patch}, dim {d}, "
          f"{len(v.transformer.resblocks)} blocks")


def convert_voc(args) -> None:
    import numpy as np
    from PIL import Image

    root = Path(args.voc_root)
    split_file = root / "ImageSets" / "Segmentation" / f"{args.split}.txt"
    ids = split_file.read_text().split()
    out_images = Path(args.output) / "images"
    out_gt = Path(args.output) / "gt"
    out_images.mkdir(parents=True, exist_ok=True)
    out_gt.mkdir(parents=True, exist_ok=True)

    for image_id in ids:
        rgb = Image.open(root / "JPEGImages" / f"{image_id}.jpg").convert("RGB")
        rgb.save(out_images / f"{image_id}.ppm")

        ann = np.array(Image.open(root / "SegmentationClass" / f"{image_id}.png"))
        # drop background and void: the 20 object classes become 0..19,
        # everything else is the ignore label
        remapped = np.full(ann.shape, 255, dtype=np.uint8)
        fg = (ann >= 1) & (ann <= 20)
        remapped[fg] = (ann[fg] - 1).astype(np.uint8)
        mask = Image.fromarray(remapped, mode="L")
        with open(out_gt / f"{image_id}.pgm", "wb") as f:
            f.write(f"P5\n{mask.width} {mask.height}\n255\n".encode())
            f.write(remapped.tobytes())
    print(f"converted {len(ids)} images into {args.output}/")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="export weights and class embeddings")
    exp.add_argument("--model", default="ViT-B-16")
    exp.add_argument("--pretrained", default="openai")
    exp.add_argument("--classes", default="",
                     help="comma-separated class names (default: the 20 VOC classes)")
    exp.add_argument("--output", default="clip_vit_b16_voc20.scwt")
    exp.set_defaults(func=export_weights)

    voc = sub.add_parser("convert-voc", help="convert a VOC layout to .ppm/.pgm")
    voc.add_argument("--voc-root", required=True, help="path to VOCdevkit/VOC2012")
    voc.add_argument("--split", default="val")
    voc.add_argument("--output", default="voc20_data")
    voc.set_defaults(func=convert_voc)

    args = parser.parse_args()
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
