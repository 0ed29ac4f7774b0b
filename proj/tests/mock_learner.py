#!/usr/bin/env python3
"""Scripted classifier speaking the line-delimited JSON learner protocol.

Nearest-centroid model: fit stores per-class feature means, predict applies
softmax over negative half squared distances. Deterministic, no RNG.

Flags exercise the failure paths of the protocol:
  --fail OP   reply {"ok": false, ...} to that op
  --garbage   reply with a non-JSON line to every request
  --die OP    exit without replying to that op
"""

import argparse
import json
import math
import sys


def softmax(scores):
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--dim", type=int, default=4)
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--fail", choices=["hello", "fit", "predict"])
    parser.add_argument("--garbage", action="store_true")
    parser.add_argument("--die", choices=["hello", "fit", "predict"])
    args = parser.parse_args()

    centroids = [[0.0] * args.dim for _ in range(args.classes)]

    def reply(payload):
        sys.stdout.write(json.dumps(payload) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        op = request["op"]
        if args.die == op:
            return 0
        if args.garbage:
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        if args.fail == op:
            reply({"ok": False, "error": "scripted failure for op '%s'" % op})
            continue

        if op == "hello":
            reply({"ok": True, "dim": args.dim, "classes": args.classes})
        elif op == "fit":
            sums = [[0.0] * args.dim for _ in range(args.classes)]
            counts = [0] * args.classes
            for item in request["train"]:
                y = item["y"]
                counts[y] += 1
                for j, v in enumerate(item["x"]):
                    sums[y][j] += v
            for c in range(args.classes):
                if counts[c]:
                    centroids[c] = [s / counts[c] for s in sums[c]]
            correct = 0
            val = request["val"]
            for item in val:
                scores = [
                    -0.5 * sum((a - b) ** 2 for a, b in zip(item["x"], centroids[c]))
                    for c in range(args.classes)
                ]
                if scores.index(max(scores)) == item["y"]:
                    correct += 1
            acc = correct / len(val) if val else 0.0
            reply({"ok": True, "best_epoch": request["epochs"], "val_acc": acc})
        elif op == "predict":
            probs = []
            for x in request["instances"]:
                scores = [
                    -0.5 * sum((a - b) ** 2 for a, b in zip(x, centroids[c]))
                    for c in range(args.classes)
                ]
                probs.append(softmax(scores))
            reply({"ok": True, "probs": probs})
        else:
            reply({"ok": False, "error": "unknown op '%s'" % op})
    return 0


if __name__ == "__main__":
    sys.exit(main())
