"""Writes corridor.json and corridor_library.json.

Geometry is authored in the ego frame at the key timestamp and mapped to a
world frame at (100, 50) with heading 0.5 rad.
"""
import json
import math

KEY = (100.0, 50.0, 0.5)
KEY_TIME = 12.0


def to_world(x, y):
    c, s = math.cos(KEY[2]), math.sin(KEY[2])
    return [round(KEY[0] + c * x - s * y, 12), round(KEY[1] + s * x + c * y, 12)]


def yaw_world(yaw):
    return KEY[2] + yaw


expert = [(0.76, 0.02), (1.45, 0.03), (2.05, 0.05), (2.58, 0.07), (3.03, 0.10), (3.44, 0.12)]
path = [(-1.6, -0.02), (-0.8, -0.01), (0.0, 0.0)] + expert + [(3.80, 0.14)]
times = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]
poses = []
for i, ((x, y), t) in enumerate(zip(path, times)):
    if i == 2:
        yaw = 0.0
    else:
        j = max(i, 1)
        yaw = math.atan2(path[j][1] - path[j - 1][1], path[j][0] - path[j - 1][0])
    wx, wy = to_world(x, y)
    poses.append({"t": KEY_TIME + t, "x": wx, "y": wy, "yaw": round(yaw_world(yaw), 12)})

scene = {
    "schema_version": "omnidrive_scene_v1",
    "scene_id": "corridor-0001",
    "key_time": KEY_TIME,
    "ego": {"length": 4.08, "width": 1.85},
    "ego_poses": poses,
    "agents": [
        {
            "id": "cone-1",
            "category": "movable_object.trafficcone",
            "length": 0.5,
            "width": 0.5,
            "poses": [{"t": KEY_TIME, **dict(zip("xy", to_world(8.2, 2.4))), "yaw": KEY[2]}],
        },
        {
            "id": "ped-1",
            "category": "human.pedestrian.moving",
            "length": 0.7,
            "width": 0.7,
            "poses": [{"t": KEY_TIME, **dict(zip("xy", to_world(4.4, -7.2))), "yaw": KEY[2]}],
        },
    ],
    "lanes": [
        {
            "id": "lane-main",
            "polyline": [to_world(x, y) for x, y in [(-2.6, 0.5), (1.2, 0.7), (5.0, 0.9), (8.8, 1.0)]],
            "successors": ["lane-next"],
        },
        {
            "id": "lane-next",
            "polyline": [to_world(x, y) for x, y in [(8.8, 1.0), (20.0, 1.2), (38.0, 1.2)]],
        },
    ],
    "drivable": {"outer": [[to_world(x, y) for x, y in [(-15, -2.2), (40, -2.2), (40, 3.0), (-15, 3.0)]]]},
    "caption": (
        "Daylight, dry weather. The ego car rolls slowly through the gate of an "
        "industrial yard. A traffic cone stands a few meters ahead on the left "
        "edge of the lane and a pedestrian walks on the pavement to the right."
    ),
}


def traj(pts):
    return {"period": 0.5, "waypoints": [{"t": 0.5 * (i + 1), "x": x, "y": y} for i, (x, y) in enumerate(pts)]}


library = {
    "schema_version": "omnidrive_library_v1",
    "period": 0.5,
    "horizon": 3.0,
    "entries": [
        {
            "trajectory": traj([(4.85, -0.08), (9.71, -0.22), (14.50, -0.60), (19.10, -1.20), (23.60, -2.00), (27.42, -0.93)]),
            "decision": {"speed": "Moderate Speed", "longitudinal": "Constant Speed", "lateral": "Left Turn", "lane_behavior": "Unknown"},
            "cluster_size": 12,
        },
        {
            "trajectory": traj([(0.75, 0.0), (1.5, 0.0), (2.25, 0.0), (3.0, 0.0), (3.75, 0.0), (4.5, 0.0)]),
            "decision": {"speed": "Moving Slowly", "longitudinal": "Constant Speed", "lateral": "Go Straight", "lane_behavior": "Unknown"},
            "cluster_size": 40,
        },
    ],
}

with open("corridor.json", "w") as f:
    json.dump(scene, f, indent=2)
    f.write("\n")
with open("corridor_library.json", "w") as f:
    json.dump(library, f, indent=2)
    f.write("\n")
