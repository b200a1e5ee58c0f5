"""Regenerate src/spmix/data/sample_news.csv: 200 short synthetic headlines
in four topics (1 world, 2 sports, 3 business, 4 science), 1-based labels."""
import csv
from pathlib import Path

from spmix.tensor import Rng

TOPICS = {
    1: dict(
        subj=["the prime minister", "rebel leaders", "the united nations", "foreign ministers",
              "the president", "border guards", "peace envoys", "the parliament", "election officials"],
        verb=["condemned", "negotiated", "signed", "rejected", "announced", "debated"],
        obj=["a ceasefire", "the treaty", "new sanctions", "the refugee plan", "a border agreement",
             "the election results", "military aid", "diplomatic talks"],
        place=["in the capital", "near the frontier", "at the summit", "after the vote",
               "amid protests", "during the embassy visit"],
    ),
    2: dict(
        subj=["the striker", "the home team", "the coach", "the champions", "the goalkeeper",
              "the veteran pitcher", "the tennis star", "the rookie quarterback"],
        verb=["won", "lost", "scored in", "dominated", "clinched", "struggled in"],
        obj=["the final", "the playoff game", "the title match", "the season opener",
             "the derby", "the tournament", "the league cup", "the championship series"],
        place=["in overtime", "at the stadium", "before a sellout crowd", "after a late goal",
               "in the second half", "on the road"],
    ),
    3: dict(
        subj=["the central bank", "shareholders", "the retailer", "oil producers", "the airline",
              "investors", "the automaker", "quarterly earnings"],
        verb=["raised", "cut", "reported", "forecast", "boosted", "slashed"],
        obj=["interest rates", "profits", "the dividend", "sales growth", "stock prices",
             "its revenue outlook", "crude output", "merger plans"],
        place=["on wall street", "as markets closed", "amid inflation fears", "for the quarter",
               "despite weak demand", "after the merger"],
    ),
    4: dict(
        subj=["researchers", "the space agency", "software engineers", "the chip maker",
              "astronomers", "a biotech startup", "the telescope team", "physicists"],
        verb=["discovered", "launched", "developed", "tested", "released", "unveiled"],
        obj=["a new processor", "the satellite", "an open source browser", "a gene therapy",
             "a distant galaxy", "the quantum computer", "a security patch", "the mars rover"],
        place=["in the laboratory", "into orbit", "for mobile devices", "using machine learning",
               "at the research institute", "with new sensors"],
    ),
}


def main(out: Path, per_class: int = 50, seed: int = 2024):
    rng = Rng(seed)
    rows = []
    for label, vocab in TOPICS.items():
        for _ in range(per_class):
            words = [vocab[k][rng.integers(len(vocab[k]))] for k in ("subj", "verb", "obj", "place")]
            rows.append((label, " ".join(words).capitalize() + "."))
    order = rng.permutation(len(rows))
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for i in order:
            w.writerow(rows[i])


if __name__ == "__main__":
    main(Path(__file__).resolve().parents[1] / "src" / "spmix" / "data" / "sample_news.csv")
