#!/usr/bin/env python3
"""Writes the example maps under data/maps. Conflict points are found by
intersecting lane polylines, so edit geometry here rather than in the JSON."""

import json
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "maps"


def arc(cx, cy, r, a0, a1, n=12):
    return [[cx + r * math.cos(a0 + (a1 - a0) * i / n), cy + r * math.sin(a0 + (a1 - a0) * i / n)] for i in range(n + 1)]


def dedup(pts):
    out = []
    for p in pts:
        if not out or math.dist(out[-1], p) > 1e-9:
            out.append([round(p[0], 6), round(p[1], 6)])
    return out


def lane(id_, pts, limit, **kw):
    d = {"id": id_, "points": dedup(pts), "width": 3.5, "speed_limit": limit}
    d.update(kw)
    return d


def crossings(a, b):
    """Arc positions of every proper crossing of two polylines."""
    out = []
    sa = 0.0
    for i in range(len(a) - 1):
        p, p2 = a[i], a[i + 1]
        la = math.dist(p, p2)
        sb = 0.0
        for j in range(len(b) - 1):
            q, q2 = b[j], b[j + 1]
            lb = math.dist(q, q2)
            rx, ry = p2[0] - p[0], p2[1] - p[1]
            qx, qy = q2[0] - q[0], q2[1] - q[1]
            den = rx * qy - ry * qx
            if abs(den) > 1e-12:
                t = ((q[0] - p[0]) * qy - (q[1] - p[1]) * qx) / den
                u = ((q[0] - p[0]) * ry - (q[1] - p[1]) * rx) / den
                if 1e-9 < t < 1 - 1e-9 and 1e-9 < u < 1 - 1e-9:
                    out.append((sa + t * la, sb + u * lb))
            sb += lb
        sa += la
    return out


def add_conflicts(doc, pairs, radius=2.5):
    lanes = {l["id"]: l["points"] for l in doc["lanes"]}
    cps = doc.setdefault("conflict_points", [])
    for a, b, prio in pairs:
        for k, (s_a, s_b) in enumerate(crossings(lanes[a], lanes[b])):
            cp = {"id": f"{a}x{b}" + (f"_{k}" if k else ""), "lane_a": a, "s_a": round(s_a, 6),
                  "lane_b": b, "s_b": round(s_b, 6), "radius": radius}
            if prio:
                cp["priority"] = prio
            cps.append(cp)


def straight():
    return {"version": 1, "name": "straight", "lanes": [
        lane("l0", [[0, 0], [800, 0]], 20.0, left="l1"),
        lane("l1", [[0, 3.5], [800, 3.5]], 20.0, right="l0"),
    ]}


def merge():
    # The ramp runs alongside main0 and ends in a wall at x = 300.
    return {"version": 1, "name": "merge", "lanes": [
        lane("main0", [[0, 0], [800, 0]], 20.0, left="main1", right="ramp"),
        lane("main1", [[0, 3.5], [800, 3.5]], 20.0, right="main0"),
        lane("ramp", [[0, -3.5], [300, -3.5]], 20.0, left="main0", dead_end=True),
    ]}


def intersection():
    h = 1.75
    r = 10.0
    doc = {"version": 1, "name": "intersection", "lanes": [
        lane("n_thru", [[h, -150], [h, 150]], 13.9),
        lane("s_thru", [[-h, 150], [-h, -150]], 13.9),
        lane("e_thru", [[-150, -h], [150, -h]], 13.9),
        lane("w_thru", [[150, h], [-150, h]], 13.9),
        # Northbound turning left onto westbound.
        lane("n_left", [[h, -150], [h, -r]] + arc(-r, -r, r + h, 0.0, math.pi / 2) + [[-r, h], [-150, h]], 13.9),
    ]}
    add_conflicts(doc, [
        ("n_left", "s_thru", "b"),
        ("n_left", "e_thru", "b"),
        ("n_thru", "e_thru", ""),
        ("n_thru", "w_thru", ""),
        ("s_thru", "e_thru", ""),
        ("s_thru", "w_thru", ""),
    ], radius=3.0)
    return doc


def roundabout():
    R = 25.0
    approach = 120.0
    split = math.radians(20)
    centers = {"s": -math.pi / 2, "e": 0.0, "n": math.pi / 2, "w": math.pi}
    order = ["s", "e", "n", "w"]  # counter-clockwise
    lanes = []

    def ring_pt(a):
        return [R * math.cos(a), R * math.sin(a)]

    for i, k in enumerate(order):
        th = centers[k]
        nk = order[(i + 1) % 4]
        nth = centers[nk] if centers[nk] > th else centers[nk] + 2 * math.pi
        # r_<k>: entry point of k to the exit point of the next arm.
        # Exits branch off where x_<nk> begins.
        lanes.append(lane(f"r_{k}", arc(0, 0, R, th + split, nth - split, 16), 8.0,
                          next=[f"x_{nk}", f"out_{nk}"]))
        # x_<nk>: across the next arm, from its exit point to its entry point.
        lanes.append(lane(f"x_{nk}", arc(0, 0, R, nth - split, nth + split, 6), 8.0,
                          next=[f"r_{nk}"]))
        ux, uy = math.cos(th), math.sin(th)
        tx, ty = -uy, ux  # counter-clockwise tangent
        entry_end = ring_pt(th + split)
        exit_start = ring_pt(th - split)
        lanes.append(lane(f"in_{k}", [[entry_end[0] + approach * ux + 6 * tx, entry_end[1] + approach * uy + 6 * ty],
                                      [entry_end[0] + 8 * ux + 2 * tx, entry_end[1] + 8 * uy + 2 * ty], entry_end],
                          12.0, next=[f"r_{k}"]))
        lanes.append(lane(f"out_{k}", [exit_start, [exit_start[0] + 8 * ux - 2 * tx, exit_start[1] + 8 * uy - 2 * ty],
                                       [exit_start[0] + approach * ux - 6 * tx, exit_start[1] + approach * uy - 6 * ty]],
                          12.0))
    doc = {"version": 1, "name": "roundabout", "lanes": lanes, "conflict_points": []}
    # Entering traffic yields to the ring at the merge point.
    lens = {l["id"]: sum(math.dist(l["points"][i], l["points"][i + 1]) for i in range(len(l["points"]) - 1))
            for l in lanes}
    for k in order:
        doc["conflict_points"].append({"id": f"merge_{k}", "lane_a": f"in_{k}", "s_a": round(lens[f"in_{k}"], 6),
                                       "lane_b": f"r_{k}", "s_b": 0.0, "radius": 3.0, "priority": "b"})
    return doc


def signal_corridor():
    return {"version": 1, "name": "signal_corridor", "lanes": [
        lane("a", [[0, 0], [700, 0]], 16.7),
    ], "signals": [{"signal": "sig1", "lane": "a", "s": 400.0, "approach": 0}]}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in [("straight", straight), ("merge", merge), ("intersection", intersection),
                     ("roundabout", roundabout), ("signal_corridor", signal_corridor)]:
        (OUT / f"{name}.json").write_text(json.dumps(fn(), indent=1) + "\n")


if __name__ == "__main__":
    main()
