"""Regenerates the bundled data files under crates/core/data.

The embeddings are synthetic GloVe-format vectors: every room has a random
direction, every location sits near its room, and every object token sits
near the location it belongs in, so cosine similarity carries the kind of
co-occurrence signal real word vectors have. Output is deterministic.
"""

import json
from pathlib import Path

import numpy as np

DIM = 100
DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "data"

TEMPLATE_WORDS = """
you are in the see a an and is closed open empty contains on floor carrying
nothing there no exits exit to north south east west that not something can do
right now look around go take put insert into of
""".split()


def unit(v):
    return v / np.linalg.norm(v)


def embeddings(vocab, rng):
    vec = {}
    room_dir = {r: unit(rng.normal(size=DIM)) for r in vocab["rooms"]}
    for word in TEMPLATE_WORDS:
        vec.setdefault(word, unit(rng.normal(size=DIM)))
    for room in vocab["rooms"]:
        for tok in room.split():
            vec.setdefault(tok, unit(room_dir[room] + 0.5 * unit(rng.normal(size=DIM))))

    loc_vec = {}
    tok_sources = {}
    for loc in vocab["locations"]:
        v = unit(0.6 * room_dir[loc["room"]] + unit(rng.normal(size=DIM)))
        loc_vec[loc["name"]] = v
        for tok in loc["name"].split():
            tok_sources.setdefault(tok, []).append(v)
    for tok, vs in sorted(tok_sources.items()):
        if tok not in vec:
            vec[tok] = unit(np.mean(vs, axis=0) + 0.3 * unit(rng.normal(size=DIM)))

    obj_sources = {}
    for obj in vocab["objects"]:
        for tok in obj["name"].split():
            obj_sources.setdefault(tok, []).append(loc_vec[obj["goal"]])
    for tok, vs in sorted(obj_sources.items()):
        if tok not in vec:
            vec[tok] = unit(np.mean(vs, axis=0) + 0.8 * unit(rng.normal(size=DIM)))

    with open(DATA / "embeddings-100d.txt", "w") as f:
        for tok in sorted(vec):
            f.write(tok + " " + " ".join(f"{x:.5f}" for x in vec[tok]) + "\n")


def manual_kb(vocab):
    rows = [{"head": o["name"], "rel": "at location", "tail": o["goal"]} for o in vocab["objects"]]
    related = [
        ("dirty fork", "dirty plate"), ("clean spoon", "clean knife"), ("bath towel", "hand towel"),
        ("dirty shirt", "dirty socks"), ("pillow", "quilt"), ("milk", "cheese"),
    ]
    rows += [{"head": a, "rel": "related to", "tail": b} for a, b in related]
    with open(DATA / "manual.jsonl", "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def cn_uri(term, lang="en"):
    return f"/c/{lang}/{term.replace(' ', '_')}"


def conceptnet_sample(vocab, rng):
    rels = ["RelatedTo", "IsA", "UsedFor", "PartOf", "HasA", "CapableOf", "Synonym"]
    objects = [o["name"] for o in vocab["objects"]]
    locations = [l["name"] for l in vocab["locations"]]
    rows = []

    def add(rel, a, b, lang_a="en", lang_b="en"):
        s, e = cn_uri(a, lang_a), cn_uri(b, lang_b)
        meta = json.dumps({"dataset": "/d/conceptnet/4/en", "weight": 1.0})
        rows.append(f"/a/[/r/{rel}/,{s}/,{e}/]\t/r/{rel}\t{s}/n\t{e}\t{meta}")

    # Single-word heads, as ConceptNet mostly stores them.
    for o in vocab["objects"]:
        head = o["name"].split()[-1]
        if rng.random() < 0.7:
            add("AtLocation", head, o["goal"])
        if rng.random() < 0.3:
            add("AtLocation", head, locations[rng.integers(len(locations))])
    for name in objects + locations:
        for _ in range(int(rng.integers(1, 4))):
            add(rels[rng.integers(len(rels))], name, objects[rng.integers(len(objects))])
    for loc in vocab["locations"]:
        add("AtLocation", loc["name"], loc["room"])
    for a, b in [("fork", "tenedor"), ("plate", "plato"), ("towel", "toalla")]:
        add("Synonym", a, b, "en", "es")
    rows.append("/a/[malformed]\t/r/AtLocation\t/c/en/fork")
    with open(DATA / "conceptnet-sample.tsv", "w") as f:
        f.write("\n".join(rows) + "\n")


def vg_sample(vocab, rng):
    preds = ["on", "in", "next to", "near", "has", "under", "on top of", "inside"]
    locs_by_room = {}
    for l in vocab["locations"]:
        locs_by_room.setdefault(l["room"], []).append(l)
    images = []
    image_id = 1
    for room, locs in locs_by_room.items():
        room_objs = [o for o in vocab["objects"] if any(l["name"] == o["goal"] for l in locs)]
        for _ in range(12):
            rels = []
            for _ in range(int(rng.integers(3, 8))):
                o = room_objs[rng.integers(len(room_objs))]
                if rng.random() < 0.6:
                    pred = "in" if o["relation"] == "in" else "on"
                    target = o["goal"]
                else:
                    pred = preds[rng.integers(len(preds))]
                    target = locs[rng.integers(len(locs))]["name"]
                subject = {"name": o["name"]} if rng.random() < 0.5 else {"names": [o["name"]]}
                rels.append({"predicate": pred, "subject": subject, "object": {"name": target}})
            images.append({"image_id": image_id, "relationships": rels})
            image_id += 1
    images.append({"image_id": image_id})
    with open(DATA / "vg-sample.json", "w") as f:
        json.dump(images, f, indent=1)
        f.write("\n")


def main():
    vocab = json.loads((DATA / "vocab.json").read_text())
    rng = np.random.default_rng(20220301)
    embeddings(vocab, rng)
    manual_kb(vocab)
    conceptnet_sample(vocab, rng)
    vg_sample(vocab, rng)


if __name__ == "__main__":
    main()
