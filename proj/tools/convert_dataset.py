#!/usr/bin/env python3
"""Convert citation-graph dumps into the JSON container read by the library.

Supported inputs:
  planetoid-raw  <prefix>.content and <prefix>.cites (LINQS text format)
  npz            a graph .npz with adj_*, attr_* (CSR) and labels arrays

Example:
  python3 tools/convert_dataset.py planetoid-raw cora/cora data/cora.json --name cora
"""

import argparse
import json
import sys

import numpy as np
import scipy.sparse as sp


def from_planetoid_raw(prefix):
    ids, rows, labels = [], [], []
    with open(prefix + ".content") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            labels.append(parts[-1])
    index = {p: i for i, p in enumerate(ids)}
    classes = sorted(set(labels))
    y = [classes.index(c) for c in labels]
    x = sp.csr_matrix(np.asarray(rows))
    edges = set()
    skipped = 0
    with open(prefix + ".cites") as f:
        for line in f:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = parts
            if a not in index or b not in index:
                skipped += 1  # citations to papers without a feature row
                continue
            u, v = index[a], index[b]
            if u != v:
                edges.add((min(u, v), max(u, v)))
    if skipped:
        print(f"skipped {skipped} citations to unknown papers", file=sys.stderr)
    return x, sorted(edges), y, len(classes)


def from_npz(path):
    z = np.load(path, allow_pickle=True)
    adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=tuple(z["adj_shape"]))
    if "attr_data" in z:
        x = sp.csr_matrix((z["attr_data"], z["attr_indices"], z["attr_indptr"]), shape=tuple(z["attr_shape"]))
    else:
        x = sp.csr_matrix(z["attr_matrix"])
    y = np.asarray(z["labels"]).astype(int).tolist()
    adj = sp.triu(adj + adj.T, k=1).tocoo()
    edges = sorted({(int(u), int(v)) for u, v in zip(adj.row, adj.col)})
    return x, edges, y, int(max(y)) + 1


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("format", choices=["planetoid-raw", "npz"])
    ap.add_argument("source", help="file prefix (planetoid-raw) or .npz path")
    ap.add_argument("output")
    ap.add_argument("--name", default=None)
    args = ap.parse_args()

    if args.format == "planetoid-raw":
        x, edges, y, k = from_planetoid_raw(args.source)
    else:
        x, edges, y, k = from_npz(args.source)
    x = sp.csr_matrix(x)
    x.sort_indices()
    out = {
        "name": args.name or args.source,
        "n": int(x.shape[0]),
        "d": int(x.shape[1]),
        "k": int(k),
        "edges": [list(e) for e in edges],
        "features": {
            "indptr": x.indptr.tolist(),
            "indices": x.indices.tolist(),
            "data": x.data.tolist(),
        },
        "labels": y,
    }
    with open(args.output, "w") as f:
        json.dump(out, f)
    print(f"{out['name']}: n={out['n']} d={out['d']} k={out['k']} edges={len(edges)}", file=sys.stderr)


if __name__ == "__main__":
    main()
