"""Smoke test for the tidyworld Python bindings.

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import json
import sys
import tempfile
from pathlib import Path

import tidyworld

DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "data"


def main():
    stats = tidyworld.kb_stats(str(DATA / "manual.jsonl"), "jsonl")
    assert stats["relations"] == 2, stats
    top = tidyworld.relation_histogram(str(DATA / "vg-sample.json"), "vg", top=3)
    assert len(top) == 3, top
    print("manual kb:", stats, "vg top-3:", top)

    game = tidyworld.Game("medium", seed=3)
    print(game.reset())
    for action in game.oracle_plan():
        assert action in game.admissible_actions(), action
        obs, reward, done = game.step(action)
    assert done and game.score == 1.0, (game.score, game.steps)
    assert json.loads(game.to_json())["level"] == "medium"
    print(f"oracle solved the game in {game.steps} steps")

    game.reset()
    try:
        tidyworld.Game("impossible", seed=0)
    except ValueError as e:
        print("bad level rejected:", e)
    else:
        sys.exit("expected a ValueError")

    with tempfile.TemporaryDirectory() as tmp:
        config = {
            "level": "easy",
            "episodes": 3,
            "runs": 1,
            "schedule": [{"source": "manual", "knowledge": [{"path": str(DATA / "manual.jsonl"), "format": "jsonl"}]}],
            "embeddings": str(DATA / "embeddings-100d.txt"),
            "out_dir": str(Path(tmp) / "run"),
        }
        path = Path(tmp) / "config.json"
        path.write_text(json.dumps(config))
        metrics = tidyworld.train(str(path))
        rows = Path(metrics).read_text().splitlines()
        assert len(rows) == 4, rows
        games = Path(tmp) / "games" / "easy" / "in"
        games.mkdir(parents=True)
        (games / "0.json").write_text(tidyworld.Game("easy", seed=0, split="in").to_json())
        report = tidyworld.evaluate(str(Path(tmp) / "run" / "checkpoints" / "run1-ep3.json"), str(Path(tmp) / "games"))
        print(report, end="")
        assert report.startswith("level,split,method,n,steps,score")

    print("ok")


if __name__ == "__main__":
    main()
