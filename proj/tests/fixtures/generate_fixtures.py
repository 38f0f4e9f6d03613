"""Regenerates the annotation fixtures used by the unit and acceptance tests.

hico_fixture.json: 80 objects, 117 verbs, 600 HOI classes. Objects 0-11 touch
exactly 100 HOI classes and 138 classes have fewer than ten instances.
vcoco_fixture.json: 29 verbs with roles, including subject-only actions.
minimal.json: one image with one <human, cup, hold> pair.
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))


def write(name, data):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(data, f, separators=(",", ":"))
        f.write("\n")


def hico():
    objects = [f"object_{i:02d}" for i in range(80)]
    verbs = [f"verb_{i:03d}" for i in range(117)]
    per_object = [8] * 8 + [9] * 4 + [8] * 24 + [7] * 44
    assert sum(per_object) == 600 and sum(per_object[:12]) == 100
    classes = []
    v = 0
    for o, k in enumerate(per_object):
        for _ in range(k):
            classes.append({"verb": v, "object": o})
            v = (v + 1) % 117
    rare = set([i for i in range(600) if i % 4 == 1][:138])
    counts = [1 + (i % 9) if i in rare else 10 + (i % 3) for i in range(600)]
    images = []
    per_image = 20
    pending = [c for c, n in enumerate(counts) for _ in range(n)]
    for start in range(0, len(pending), per_image):
        chunk = pending[start:start + per_image]
        anns = [{"bbox": [10, 10, 110, 230], "category_id": -1}]
        hois = []
        for j, c in enumerate(chunk):
            x = 120 + 20 * j
            anns.append({"bbox": [x, 40, x + 18, 90], "category_id": classes[c]["object"]})
            hois.append({"subject_id": 0, "object_id": len(anns) - 1, "category_id": classes[c]["verb"]})
        images.append({"file_name": f"hico_{len(images):05d}.png", "width": 640, "height": 480,
                       "annotations": anns, "hoi_annotation": hois})
    write("hico_fixture.json", {"format": "hico", "objects": objects, "verbs": verbs,
                                "hoi_classes": classes, "images": images})


def vcoco():
    verbs = ["hold", "stand", "sit", "ride", "walk", "look", "hit", "eat", "jump", "lay",
             "talk_on_phone", "carry", "throw", "catch", "cut", "run", "work_on_computer", "ski",
             "surf", "skateboard", "smile", "drink", "kick", "point", "read", "snowboard",
             "hit_instr", "cut_instr", "eat_instr"]
    none = {"stand", "walk", "run", "smile", "point"}
    instr = {"sit", "ride", "talk_on_phone", "work_on_computer", "ski", "surf", "skateboard",
             "snowboard", "hit_instr", "cut_instr", "eat_instr", "lay", "jump"}
    roles = ["none" if v in none else ("instr" if v in instr else "obj") for v in verbs]
    objects = ["cup", "ball", "bicycle", "horse", "phone", "laptop", "book", "knife", "pizza", "skis"]
    images = [
        {"file_name": "vcoco_0.png", "width": 320, "height": 240,
         "annotations": [{"bbox": [10, 10, 90, 200], "category_id": -1},
                         {"bbox": [60, 80, 100, 120], "category_id": 0}],
         "hoi_annotation": [{"subject_id": 0, "object_id": 1, "category_id": 0},
                            {"subject_id": 0, "object_id": -1, "category_id": 1}]},
        {"file_name": "vcoco_1.png", "width": 320, "height": 240,
         "annotations": [{"bbox": [100, 20, 180, 220], "category_id": -1},
                         {"bbox": [90, 150, 200, 230], "category_id": 2}],
         "hoi_annotation": [{"subject_id": 0, "object_id": 1, "category_id": 3},
                            {"subject_id": 0, "object_id": -1, "category_id": 5}]},
    ]
    write("vcoco_fixture.json", {"format": "vcoco", "objects": objects, "verbs": verbs,
                                 "verb_roles": roles, "images": images})


def minimal():
    write("minimal.json", {
        "format": "hico", "objects": ["cup"], "verbs": ["hold"],
        "hoi_classes": [{"verb": 0, "object": 0}],
        "images": [{"file_name": "one.png", "width": 64, "height": 64,
                    "annotations": [{"bbox": [8, 8, 32, 56], "category_id": -1},
                                    {"bbox": [28, 30, 40, 42], "category_id": 0}],
                    "hoi_annotation": [{"subject_id": 0, "object_id": 1, "category_id": 0}]}]})


if __name__ == "__main__":
    hico()
    vcoco()
    minimal()
