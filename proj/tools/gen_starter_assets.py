#!/usr/bin/env python3
"""Regenerates the bundled starter pools under data/starter/.

Output is deterministic (fixed seed). Motion tracks are procedural: a few
joints swing with amplitudes driven by the clip's VAD so that the pose ->
VADI regression has something to learn.
"""

import argparse
import json
import math
import random
from pathlib import Path

# term, valence, arousal, dominance
EMOTIONS = [
    ("neutral", 0.5, 0.5, 0.5),
    ("happy", 1.0, 0.7, 0.8),
    ("delight", 0.9, 0.6, 0.6),
    ("glad", 0.9, 0.7, 0.7),
    ("joyful", 0.8, 0.7, 0.6),
    ("respectful", 0.9, 0.4, 0.8),
    ("concerned", 0.3, 0.6, 0.4),
    ("scared", 0.3, 0.8, 0.3),
    ("annoyed", 0.1, 0.8, 0.3),
    ("sad", 0.1, 0.3, 0.2),
    ("angry", 0.1, 0.9, 0.7),
    ("surprised", 0.7, 0.9, 0.5),
    ("disgusted", 0.1, 0.6, 0.5),
    ("calm", 0.7, 0.1, 0.5),
    ("proud", 0.9, 0.6, 0.9),
    ("ashamed", 0.1, 0.5, 0.2),
    ("bored", 0.2, 0.1, 0.3),
    ("excited", 0.9, 0.9, 0.7),
    ("nervous", 0.2, 0.8, 0.2),
    ("confused", 0.3, 0.5, 0.3),
    ("amused", 0.8, 0.6, 0.6),
]

# motion name, duration (s), lexicon entries needed by the name
MOTIONS = [
    ("talk", 3.0), ("wave", 2.0), ("high-five", 1.5), ("hug", 3.0), ("clap", 2.0),
    ("bow", 2.5), ("point", 1.5), ("shrug", 1.5), ("nod", 1.0), ("laugh", 2.5),
    ("cry", 3.5), ("dance", 4.0), ("jump", 1.5), ("kick", 1.5), ("punch", 1.0),
    ("push", 1.5), ("salute", 2.0), ("shake hands", 2.5), ("sit", 2.0), ("stand", 2.0),
    ("walk", 3.0), ("run", 2.5), ("idle", 3.0), ("angry gesture", 2.0), ("cheer", 2.5),
    ("celebrate", 3.0), ("fist pump", 1.5), ("thumbs up", 1.5), ("yell", 2.0), ("argue", 3.5),
    ("threaten", 2.5), ("plead", 3.0), ("beg", 3.0), ("comfort", 3.5), ("console", 3.0),
    ("greet", 2.0), ("defeated", 3.0), ("bored idle", 3.5), ("look around", 3.0), ("think", 3.0),
    ("agree", 1.5), ("disagree", 1.5), ("surprised reaction", 1.5), ("scared reaction", 2.0), ("cower", 2.5),
    ("flinch", 1.0), ("rejected", 3.0), ("excited jump", 2.0), ("taunt", 2.5), ("tease", 2.5),
    ("applaud", 2.5), ("stretch", 3.0), ("yawn", 2.5), ("relax", 3.5), ("lean", 2.5),
    ("kneel", 2.5), ("pray", 3.5), ("wipe tears", 3.0), ("facepalm", 2.0), ("dismiss", 1.5),
    ("shove", 1.5), ("strut", 3.0), ("sneak", 3.5), ("limp", 3.5), ("stagger", 2.5),
]

# Single-word lexicon entries for motion names and their tokens.
MOTION_WORDS = {
    "talk": (0.6, 0.5, 0.5), "wave": (0.7, 0.5, 0.5), "high-five": (0.9, 0.8, 0.6), "hug": (0.9, 0.5, 0.5),
    "clap": (0.8, 0.7, 0.6), "bow": (0.6, 0.3, 0.3), "point": (0.5, 0.5, 0.6), "shrug": (0.4, 0.3, 0.4),
    "nod": (0.6, 0.3, 0.5), "laugh": (0.9, 0.8, 0.6), "cry": (0.1, 0.7, 0.2), "dance": (0.9, 0.8, 0.6),
    "jump": (0.6, 0.8, 0.6), "kick": (0.2, 0.8, 0.7), "punch": (0.1, 0.9, 0.8), "push": (0.3, 0.7, 0.7),
    "salute": (0.7, 0.4, 0.6), "shake": (0.5, 0.6, 0.5), "hands": (0.6, 0.4, 0.5), "sit": (0.5, 0.1, 0.4),
    "stand": (0.5, 0.3, 0.6), "walk": (0.6, 0.3, 0.5), "run": (0.5, 0.8, 0.6), "idle": (0.4, 0.1, 0.3),
    "angry": (0.1, 0.9, 0.7), "gesture": (0.6, 0.4, 0.5), "cheer": (0.9, 0.8, 0.7), "celebrate": (1.0, 0.8, 0.7),
    "fist": (0.3, 0.7, 0.7), "pump": (0.6, 0.7, 0.6), "thumbs": (0.6, 0.4, 0.5), "up": (0.7, 0.5, 0.6),
    "yell": (0.2, 0.9, 0.7), "argue": (0.2, 0.8, 0.6), "threaten": (0.1, 0.8, 0.8), "plead": (0.3, 0.6, 0.2),
    "beg": (0.2, 0.6, 0.1), "comfort": (0.9, 0.2, 0.5), "console": (0.7, 0.3, 0.5), "greet": (0.8, 0.5, 0.6),
    "defeated": (0.1, 0.4, 0.1), "bored": (0.2, 0.1, 0.3), "look": (0.5, 0.4, 0.5), "around": (0.5, 0.4, 0.5),
    "think": (0.6, 0.3, 0.6), "agree": (0.8, 0.3, 0.6), "disagree": (0.3, 0.5, 0.5), "surprised": (0.7, 0.9, 0.5),
    "reaction": (0.5, 0.6, 0.5), "scared": (0.3, 0.8, 0.3), "cower": (0.2, 0.7, 0.1), "flinch": (0.3, 0.8, 0.3),
    "rejected": (0.1, 0.5, 0.2), "excited": (0.9, 0.9, 0.7), "taunt": (0.3, 0.7, 0.8), "tease": (0.5, 0.6, 0.7),
    "applaud": (0.9, 0.7, 0.6), "stretch": (0.6, 0.3, 0.5), "yawn": (0.4, 0.1, 0.4), "relax": (0.8, 0.1, 0.5),
    "lean": (0.5, 0.2, 0.5), "kneel": (0.4, 0.3, 0.2), "pray": (0.7, 0.2, 0.3), "wipe": (0.4, 0.4, 0.4),
    "tears": (0.2, 0.6, 0.3), "facepalm": (0.3, 0.5, 0.4), "dismiss": (0.3, 0.4, 0.7), "shove": (0.2, 0.8, 0.7),
    "strut": (0.7, 0.6, 0.8), "sneak": (0.4, 0.6, 0.4), "limp": (0.2, 0.4, 0.2), "stagger": (0.3, 0.6, 0.2),
}

# Multi-word names that stay unresolved as a whole and fall back to their tokens.
TOKEN_ONLY = {"shake hands", "angry gesture", "fist pump", "thumbs up", "bored idle", "look around",
              "surprised reaction", "scared reaction", "excited jump", "wipe tears"}

EXTRA_WORDS = {
    "friend": (0.9, 0.4, 0.6), "stranger": (0.4, 0.5, 0.4), "teacher": (0.8, 0.4, 0.7), "student": (0.7, 0.5, 0.5),
    "boss": (0.5, 0.6, 0.8), "worker": (0.5, 0.4, 0.4), "parent": (0.8, 0.4, 0.7), "child": (0.8, 0.5, 0.4),
    "colleague": (0.6, 0.4, 0.5), "love": (1.0, 0.5, 0.6), "fear": (0.1, 0.8, 0.2), "joy": (1.0, 0.8, 0.7),
    "anger": (0.2, 0.9, 0.7), "sadness": (0.1, 0.3, 0.2), "pleased": (0.9, 0.5, 0.7), "upset": (0.2, 0.7, 0.3),
    "relieved": (0.8, 0.2, 0.5), "shy": (0.4, 0.4, 0.2), "jealous": (0.2, 0.7, 0.4), "grateful": (0.9, 0.4, 0.5),
}

RELATIONS = [
    ("parent_child", "high", "high"),
    ("friends", "medium", "high"),
    ("colleagues", "medium", "medium"),
    ("employer_employee", "high", "medium"),
    ("teacher_student", "high", "low"),
    ("strangers", "medium", "low"),
]

FACE_LANDMARKS = (
    [f"brow_l_{i}" for i in range(4)] + [f"brow_r_{i}" for i in range(4)]
    + [f"eye_l_{i}" for i in range(4)] + [f"eye_r_{i}" for i in range(4)]
    + [f"mouth_{i}" for i in range(6)] + ["cheek_l", "cheek_r"]
)


def skeleton():
    joints = []

    def add(name, parent, offset):
        joints.append({"name": name, "parent": parent, "offset": [round(v, 4) for v in offset]})

    add("Hips", None, (0, 0, 0))
    add("Spine", "Hips", (0, 0.10, 0))
    add("Spine1", "Spine", (0, 0.12, 0))
    add("Spine2", "Spine1", (0, 0.13, 0))
    add("Neck", "Spine2", (0, 0.15, 0))
    add("Head", "Neck", (0, 0.10, 0.02))
    add("HeadTop_End", "Head", (0, 0.18, 0))
    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        add(f"{side}Shoulder", "Spine2", (sx * 0.06, 0.12, 0))
        add(f"{side}Arm", f"{side}Shoulder", (sx * 0.12, 0, 0))
        add(f"{side}ForeArm", f"{side}Arm", (sx * 0.27, 0, 0))
        add(f"{side}Hand", f"{side}ForeArm", (sx * 0.25, 0, 0))
        fingers = [("Thumb", 0.02, 0.03, 0.03), ("Index", 0.09, 0.0, 0.025), ("Middle", 0.09, 0.0, 0.0),
                   ("Ring", 0.085, 0.0, -0.02), ("Pinky", 0.075, 0.0, -0.04)]
        for finger, base, dy, dz in fingers:
            parent = f"{side}Hand"
            for k in range(1, 5):
                name = f"{side}Hand{finger}{k}"
                off = (sx * base, dy, dz) if k == 1 else (sx * 0.03, 0, 0)
                add(name, parent, off)
                parent = name
    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        add(f"{side}UpLeg", "Hips", (sx * 0.09, -0.06, 0))
        add(f"{side}Leg", f"{side}UpLeg", (0, -0.42, 0))
        add(f"{side}Foot", f"{side}Leg", (0, -0.41, 0))
        add(f"{side}ToeBase", f"{side}Foot", (0, -0.06, 0.12))
        add(f"{side}Toe_End", f"{side}ToeBase", (0, 0, 0.06))
    assert len(joints) == 65, len(joints)
    return {"schema": "staog.skeleton/1", "name": "mixamo65", "joints": joints}


def motion_track(name, duration, vad, rng):
    v, a, d = vad
    amp = 10.0 + 50.0 * a
    phase = rng.uniform(0, 2 * math.pi)
    freq = 0.5 + 1.5 * a
    keyframes = []
    steps = int(round(duration / 0.5))
    for k in range(steps + 1):
        t = 0.5 * k
        s = math.sin(2 * math.pi * freq * t / duration * 2 + phase)
        c = math.cos(2 * math.pi * freq * t / duration + phase)
        rot = {
            "Spine": [round(-15 * (d - 0.5) + 3 * s, 3), 0.0, 0.0],
            "Spine2": [round(-10 * (v - 0.5), 3), round(5 * c, 3), 0.0],
            "Neck": [round(-20 * (d - 0.5), 3), round(10 * s * a, 3), 0.0],
            "Head": [round(-15 * (v - 0.5) + 5 * c * a, 3), 0.0, 0.0],
            "LeftArm": [round(amp * 0.3 * s, 3), 0.0, round(-60 + amp * (0.5 + 0.5 * s) * v, 3)],
            "RightArm": [round(amp * 0.3 * c, 3), 0.0, round(60 - amp * (0.5 + 0.5 * c) * (1 - 0.5 * v), 3)],
            "LeftForeArm": [0.0, round(-amp * 0.5 * (0.5 + 0.5 * s), 3), 0.0],
            "RightForeArm": [0.0, round(amp * 0.5 * (0.5 + 0.5 * c), 3), 0.0],
            "LeftUpLeg": [round(8 * a * s, 3), 0.0, 0.0],
            "RightUpLeg": [round(-8 * a * s, 3), 0.0, 0.0],
            "LeftLeg": [round(-6 * a * (0.5 + 0.5 * s), 3), 0.0, 0.0],
            "RightLeg": [round(-6 * a * (0.5 - 0.5 * s), 3), 0.0, 0.0],
        }
        root = [0.0, round(0.95 + 0.03 * a * s - 0.05 * (0.5 - d), 4), 0.0]
        keyframes.append({"t": t, "rotations": rot, "root": root})
    return {"schema": "staog.track/1", "skeleton": "mixamo65", "fps": 24, "name": name,
            "vadi": [v, a, d, 0.0], "keyframes": keyframes}


def face_landmarks(vad, rng):
    v, a, d = vad
    smile = v - 0.5
    jit = lambda: rng.gauss(0, 0.004)  # noqa: E731
    pts = {}
    for side, sx in (("l", -1), ("r", 1)):
        cx = 0.5 + sx * 0.18
        brow_y = 0.30 - 0.06 * (a - 0.5) + 0.02 * (d - 0.5)
        tilt = 0.04 * (d - 0.5) - 0.02 * smile
        for i in range(4):
            x = cx + sx * (-0.09 + 0.06 * i)
            y = brow_y + tilt * (i - 1.5) / 1.5 * sx * -1 + 0.01 * abs(i - 1.5)
            pts[f"brow_{side}_{i}"] = (x + jit(), y + jit())
        open_ = 0.035 + 0.03 * (a - 0.5) - 0.01 * max(smile, 0)
        eye_y = 0.40
        pts[f"eye_{side}_0"] = (cx - 0.06 + jit(), eye_y + jit())
        pts[f"eye_{side}_1"] = (cx + jit(), eye_y - open_ + jit())
        pts[f"eye_{side}_2"] = (cx + 0.06 + jit(), eye_y + jit())
        pts[f"eye_{side}_3"] = (cx + jit(), eye_y + open_ * 0.8 + jit())
    mouth_y = 0.72
    width = 0.14 + 0.05 * smile
    corner = -0.05 * smile
    gap = 0.01 + 0.05 * max(a - 0.4, 0) * (0.5 + v)
    pts["mouth_0"] = (0.5 - width + jit(), mouth_y + corner + jit())
    pts["mouth_1"] = (0.5 - width / 3 + jit(), mouth_y - gap / 2 - 0.01 + jit())
    pts["mouth_2"] = (0.5 + width / 3 + jit(), mouth_y - gap / 2 - 0.01 + jit())
    pts["mouth_3"] = (0.5 + width + jit(), mouth_y + corner + jit())
    pts["mouth_4"] = (0.5 + width / 3 + jit(), mouth_y + gap / 2 + 0.015 + 0.01 * smile ** 2 + jit())
    pts["mouth_5"] = (0.5 - width / 3 + jit(), mouth_y + gap / 2 + 0.015 + 0.01 * smile ** 2 + jit())
    cheek_y = 0.60 - 0.03 * max(smile, 0)
    pts["cheek_l"] = (0.28 + jit(), cheek_y + jit())
    pts["cheek_r"] = (0.72 + jit(), cheek_y + jit())
    return {k: [round(x, 5), round(y, 5)] for k, (x, y) in ((n, pts[n]) for n in FACE_LANDMARKS)}


def slug(name):
    return name.replace(" ", "_").replace("-", "_")


def lexicon_value(name):
    if name in MOTION_WORDS:
        return MOTION_WORDS[name]
    toks = [t for t in name.replace("-", " ").split() if t in MOTION_WORDS]
    return tuple(sum(MOTION_WORDS[t][i] for t in toks) / len(toks) for i in range(3))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "starter")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = args.out
    (out / "motions").mkdir(parents=True, exist_ok=True)
    (out / "faces").mkdir(parents=True, exist_ok=True)

    words = {}
    for term, v, a, d in EMOTIONS:
        words[term] = (v, a, d)
    for term, vad in MOTION_WORDS.items():
        words.setdefault(term, vad)
    for term, vad in EXTRA_WORDS.items():
        words.setdefault(term, vad)
    for name, _ in MOTIONS:
        if " " in name and name not in TOKEN_ONLY:
            words.setdefault(name, lexicon_value(name))
    with open(out / "lexicon.tsv", "w", encoding="utf-8") as f:
        f.write("# Starter VAD lexicon (term, valence, arousal, dominance)\n")
        f.write("term\tvalence\tarousal\tdominance\n")
        for term in sorted(words):
            v, a, d = words[term]
            f.write(f"{term}\t{v:.3f}\t{a:.3f}\t{d:.3f}\n")

    with open(out / "skeleton.json", "w") as f:
        json.dump(skeleton(), f, indent=1)

    assert len(MOTIONS) == 65
    motions = []
    for name, duration in MOTIONS:
        mid = slug(name)
        track = motion_track(name, duration, lexicon_value(name), rng)
        with open(out / "motions" / f"{mid}.json", "w") as f:
            json.dump(track, f, indent=1)
        motions.append({"id": mid, "name": name, "duration_s": duration, "pose_track": f"motions/{mid}.json"})

    emotions = []
    for term, v, a, d in EMOTIONS:
        face = {"schema": "staog.face/1", "name": term, "vad": [v, a, d], "landmarks": face_landmarks((v, a, d), rng)}
        with open(out / "faces" / f"{term}.json", "w") as f:
            json.dump(face, f, indent=1)
        emotions.append({"id": term, "name": term, "face": f"faces/{term}.json", "vad": [v, a, d]})

    nodes = [
        {"id": "scene", "kind": "and", "children": ["transform", "relation", "character1", "character2"]},
        {"id": "transform", "kind": "terminal", "branch": "transform"},
        {"id": "relation", "kind": "or", "slot": "relation", "children": {"pool": "relations"}},
    ]
    for c in (1, 2):
        nodes.append({"id": f"character{c}", "kind": "and",
                      "children": [f"c{c}.motion", f"c{c}.start_face", f"c{c}.end_face"]})
        nodes.append({"id": f"c{c}.motion", "kind": "or", "slot": f"c{c}.motion", "children": {"pool": "motions"}})
        for which in ("start_face", "end_face"):
            nodes.append({"id": f"c{c}.{which}", "kind": "or", "slot": f"c{c}.{which}",
                          "children": {"pool": "emotions"}})
    grammar = {
        "schema": "staog.grammar/1",
        "name": "starter",
        "relations": [{"id": r, "dominance": dl, "intimacy": il} for r, dl, il in RELATIONS],
        "motions": motions,
        "emotions": emotions,
        "transform": {"distance_range": [0.5, 3.0], "social_distance": 1.2},
        "emotion_transition_s": 1.0,
        "nodes": nodes,
        "root": "scene",
    }
    with open(out / "grammar.json", "w") as f:
        json.dump(grammar, f, indent=1)
    print(f"wrote {len(words)} lexicon terms, {len(motions)} motions, {len(emotions)} faces to {out}")


if __name__ == "__main__":
    main()
