#!/usr/bin/env python3
"""Regenerate data/corpus.txt, the bundled training text.

The corpus is original filler prose (released into the public domain /
CC0): a fixed pool of sentence templates is expanded and arranged into
topic-clustered paragraphs by a seeded RNG, so the file is reproducible
byte for byte. It exists so the tests and examples have a deterministic,
redistributable corpus; swap in any UTF-8 text for real experiments.

Usage: python scripts/make_corpus.py [--bytes 262144] [--seed 7] [--out data/corpus.txt]
"""

import argparse
from pathlib import Path

import numpy as np

TOPICS = {
    "river": {
        "subjects": ["the river", "the current", "the flood channel", "the old weir",
                     "the gravel bar", "the eddy below the bridge", "the cold spring creek"],
        "verbs": ["carries", "turns", "wears down", "gathers", "abandons", "remembers",
                  "undercuts", "polishes"],
        "objects": ["silt from the high meadows", "a raft of broken reeds",
                    "the roots of the willows", "its own winter bed", "the light of late afternoon",
                    "whatever the storm left behind", "the shape of the valley floor"],
        "clauses": [
            "and nobody who fishes here ever calls it by its map name",
            "though the ferry stopped running years before the road came through",
            "while herons pace the shallows like patient clerks",
            "until the first hard frost seals the backwaters",
            "and the smell of wet stone hangs around long after dark",
            "because the dam upstream releases water on an old schedule",
        ],
    },
    "workshop": {
        "subjects": ["the joiner", "the apprentice", "the old machinist", "the clockmaker",
                     "the bookbinder", "the glassblower", "the wheelwright"],
        "verbs": ["trues", "measures", "planes", "tempers", "rivets", "laps", "scribes",
                  "counterbores"],
        "objects": ["the long oak board", "a gauge block worn bright with use",
                    "the spindle of the south lathe", "a hinge no wider than a thumbnail",
                    "the cracked bell housing", "each tooth of the escape wheel",
                    "the seam along the copper kettle"],
        "clauses": [
            "checking the fit twice before any glue comes out",
            "because a tool that lies to you once will lie again",
            "and the shavings curl onto the floor like pale ribbon",
            "while the stove ticks through its slow afternoon heat",
            "until the surface throws back a clean reflection",
            "the way his own teacher insisted it must be done",
        ],
    },
    "harbor": {
        "subjects": ["the harbormaster", "the pilot boat", "the night ferry", "the dredger",
                     "the customs shed", "the breakwater crew", "the chandler's clerk"],
        "verbs": ["logs", "signals", "warps in", "overhauls", "provisions", "inspects",
                  "charts", "weighs"],
        "objects": ["every hull that passes the green buoy", "the tide tables for the narrow month",
                    "a cargo of salt and spun wool", "the fouled anchor chain",
                    "the lamps along the seawall", "the manifest from the morning run",
                    "soundings off the outer shoal"],
        "clauses": [
            "before the fog moves in from the cold side of the bay",
            "while gulls argue over the scraps of the early market",
            "since the channel shifts a little with every spring storm",
            "and the whole quay smells of tar and oranges",
            "though the lighthouse keeps its own stubborn hours",
            "so that no skipper can claim he was not warned",
        ],
    },
    "orchard": {
        "subjects": ["the orchard keeper", "the north block of apple trees", "the cider press",
                     "the bee yard", "the drystone wall", "the irrigation ditch", "the grafting bench"],
        "verbs": ["shelters", "yields", "outlasts", "feeds", "divides", "shades", "survives",
                  "crowds"],
        "objects": ["three kinds of late fruit", "the last of the August heat",
                    "a century of careless winters", "the low corner of the field",
                    "rows planted by a man nobody living ever met", "the first hesitant blossom",
                    "more wasps than anyone will admit"],
        "clauses": [
            "and the ladders stay out until the light fails",
            "because frost walks up the valley floor before it climbs the slope",
            "while the dogs sleep in the gap where the wall fell",
            "though the new stock never tastes quite like the old stories say",
            "until the crates stand stacked two deep in the cool shed",
            "which is reason enough to keep the hedgerow thick",
        ],
    },
    "archive": {
        "subjects": ["the county archivist", "the reading room", "the card catalogue",
                     "the map cabinet", "the conservation bench", "the basement stack",
                     "the donations ledger"],
        "verbs": ["preserves", "misfiles", "indexes", "acquires", "restores", "outgrows",
                  "catalogues", "quietly loses"],
        "objects": ["the minutes of a dissolved committee", "letters written in iron gall ink",
                    "a survey of roads that were never built", "the photographs from the flood year",
                    "deeds folded into eighths", "the parish registers nobody asks for",
                    "a shoebox of unlabeled negatives"],
        "clauses": [
            "and every box smells faintly of cold candle wax",
            "while the radiators knock out their own slow code",
            "because paper forgives almost everything except damp",
            "though the index cards disagree with the shelves",
            "until a researcher arrives asking exactly the wrong question",
            "which is how most discoveries actually happen",
        ],
    },
    "mountain": {
        "subjects": ["the survey team", "the high pasture", "the scree slope", "the weather station",
                     "the pack trail", "the glacier's gray tongue", "the ridge line"],
        "verbs": ["records", "loses", "holds", "funnels", "resists", "reveals", "buries",
                  "announces"],
        "objects": ["two meters of spring snow", "the bootprints of last season",
                    "a wind that files everything smooth", "the long argument between ice and granite",
                    "the first thunder of the afternoon", "a cairn rebuilt by every passing party",
                    "the marmots' whistled alarms"],
        "clauses": [
            "and the valley below turns the color of old pewter",
            "before the clouds shut the pass like a drawer",
            "while the radio crackles with somebody else's weather",
            "because altitude keeps its own strict ledger",
            "though the map marks a spring that dried up decades ago",
            "until even the ravens give up the updraft",
        ],
    },
}

CONNECTORS = [
    "Meanwhile,", "By midmorning,", "Later,", "In the off season,", "Most years,",
    "After the rain,", "Toward evening,", "On quiet days,", "Every so often,",
    "According to the older hands,", "For no reason anyone records,", "As a rule,",
]


def make_sentence(rng, topic):
    t = TOPICS[topic]
    subj = t["subjects"][rng.integers(len(t["subjects"]))]
    verb = t["verbs"][rng.integers(len(t["verbs"]))]
    obj = t["objects"][rng.integers(len(t["objects"]))]
    parts = f"{subj} {verb} {obj}"
    if rng.random() < 0.55:
        parts += " " + t["clauses"][rng.integers(len(t["clauses"]))]
    if rng.random() < 0.3:
        parts = f"{CONNECTORS[rng.integers(len(CONNECTORS))]} {parts}"
    s = parts[0].upper() + parts[1:] + "."
    return s


def make_paragraph(rng, topic):
    n = int(rng.integers(3, 9))
    return " ".join(make_sentence(rng, topic) for _ in range(n))


def build(n_bytes: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    topics = list(TOPICS)
    out = []
    size = 0
    while size < n_bytes:
        topic = topics[rng.integers(len(topics))]
        # topic persists for a few paragraphs so nearby text correlates
        for _ in range(int(rng.integers(1, 4))):
            para = make_paragraph(rng, topic)
            out.append(para)
            size += len(para) + 2
            if size >= n_bytes:
                break
    return "\n\n".join(out) + "\n"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bytes", type=int, default=262144)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="data/corpus.txt")
    args = ap.parse_args()
    text = build(args.bytes, args.seed)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path} ({len(text.encode('utf-8'))} bytes)")


if __name__ == "__main__":
    main()
