"""Random fixtures shared by the test suites."""
import numpy as np

from detections.boxes import BBox
from detections.groups import FlatDetection, GroupDetection, GroupLabel


def random_box(rng, extent=100.0, min_size=5.0, max_size=60.0):
    x, y = rng.uniform(0.0, extent, 2)
    w, h = rng.uniform(min_size, max_size, 2)
    return BBox(float(x), float(y), float(w), float(h))


def jittered(box, rng, scale=0.1):
    dx, dy = rng.normal(0.0, scale, 2) * (box.w, box.h)
    sw, sh = np.exp(rng.normal(0.0, scale, 2))
    return BBox(float(box.x + dx), float(box.y + dy), float(box.w * sw), float(box.h * sh))


def random_groups(rng, count, arity, classes=2, missing=0.0, image_id=0, score_levels=None):
    """Crowded random groups; `score_levels` rounds scores to force ties."""
    groups = []
    for _ in range(count):
        base = random_box(rng)
        extras = tuple(
            None if rng.uniform() < missing else jittered(base, rng, 0.2)
            for _ in range(arity)
        )
        score = float(rng.uniform())
        if score_levels:
            score = round(score * score_levels) / score_levels
        groups.append(GroupDetection(image_id, int(rng.integers(0, classes)), score, base, extras))
    return groups


def random_labels(rng, images, per_image, arity, missing=0.0):
    labels = []
    for image in range(images):
        for index in range(per_image):
            base = random_box(rng)
            extras = tuple(
                None if rng.uniform() < missing else jittered(base, rng, 0.2)
                for _ in range(arity)
            )
            labels.append(GroupLabel(image, f"{image}-{index}", 0, base, extras))
    return labels


def detections_for(labels, rng, noise=0.1, fp_per_image=1, images=None):
    """Noisy grouped detections of `labels` plus some false groups."""
    dets = []
    for label in labels:
        if rng.uniform() < 0.2:
            continue
        extras = tuple(jittered(e, rng, noise) if e is not None else jittered(label.base, rng, 0.3)
                       for e in label.extras)
        dets.append(GroupDetection(label.image_id, label.class_id, float(rng.uniform()),
                                   jittered(label.base, rng, noise), extras))
    arity = labels[0].arity if labels else 0
    for image in range(images if images is not None else len({l.image_id for l in labels})):
        for _ in range(fp_per_image):
            base = random_box(rng)
            dets.append(GroupDetection(image, 0, float(rng.uniform(0.0, 0.5)), base,
                                       tuple(jittered(base, rng, 0.2) for _ in range(arity))))
    return dets


def separated_labels(rng, images, per_image, arity, spacing=400.0):
    """Random labels one per cell, so boxes of one role never overlap across groups."""
    labels = []
    for image in range(images):
        for index in range(per_image):
            box = random_box(rng)
            base = BBox(box.x + spacing * index, box.y, box.w, box.h)
            extras = tuple(jittered(base, rng, 0.2) for _ in range(arity))
            labels.append(GroupLabel(image, f"{image}-{index}", 0, base, extras))
    return labels


def flat_detection(image_id, role, score, box, class_id=0):
    return FlatDetection(image_id, class_id, role, score, box)
