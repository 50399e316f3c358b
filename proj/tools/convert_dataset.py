#!/usr/bin/env python3
"""Convert externally recorded array datasets (MATLAB .mat) to the dataset
directory schema used by the `mains` tools (see README, "Dataset format").

The variable names inside a recording differ between sources, so the mapping
is explicit: a JSON file names which .mat variables hold each stream and what
unit scaling to apply. Example mapping:

    {
      "imu_time":   "t_imu",          # seconds, shape (K,)
      "accel":      "acc",            # (K,3) specific force
      "gyro":       "gyr",            # (K,3) angular rate
      "mag_time":   "t_mag",          # seconds, shape (M,)
      "mag":        "mag",            # (M, 3N) stacked readings
      "truth_time": "t_gt",           # optional
      "truth_pos":  "pos_gt",         # (G,3) meters
      "truth_quat": "quat_gt",        # (G,4) scalar-first unit quaternions
      "geometry":   "sensor_pos",     # (N,3) body-frame sensor positions, m
      "accel_scale": 1.0,             # multiply accel into m/s^2
      "gyro_scale":  1.0,             # multiply gyro into rad/s
      "mag_scale":   1.0,             # multiply mag into microtesla
      "pos_scale":   1.0,             # multiply positions into meters
      "quat_order": "wxyz"            # or "xyzw"
    }

Usage:
    python3 tools/convert_dataset.py recording.mat mapping.json out_dir [--name NAME]
"""

import argparse
import json
import os
import sys

import numpy as np


def load_mat(path):
    try:
        from scipy.io import loadmat

        return {k: np.asarray(v) for k, v in loadmat(path).items()
                if not k.startswith("__")}
    except NotImplementedError:
        # MATLAB v7.3 files are HDF5.
        import h5py

        out = {}
        with h5py.File(path, "r") as f:
            def visit(name, obj):
                if isinstance(obj, h5py.Dataset):
                    out[name.split("/")[-1]] = np.asarray(obj).T
            f.visititems(visit)
        return out


def get(data, mapping, key, required=True):
    name = mapping.get(key)
    if name is None:
        if required:
            sys.exit(f"mapping is missing required key '{key}'")
        return None
    if name not in data:
        sys.exit(f"variable '{name}' (for '{key}') not found; available: "
                 f"{sorted(data.keys())}")
    return np.atleast_2d(np.squeeze(data[name]))


def as_column(v):
    v = np.squeeze(v)
    if v.ndim != 1:
        sys.exit(f"expected a 1-D time vector, got shape {v.shape}")
    return v


def as_rows(v, cols, what):
    v = np.squeeze(v)
    if v.ndim != 2:
        sys.exit(f"{what}: expected a 2-D array, got shape {v.shape}")
    if v.shape[1] != cols and v.shape[0] == cols:
        v = v.T
    if v.shape[1] != cols:
        sys.exit(f"{what}: expected {cols} columns, got shape {v.shape}")
    return v


def write_table(path, header, columns):
    with open(path, "w") as f:
        f.write(f"# {header}\n")
        for row in columns:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("recording", help=".mat recording")
    ap.add_argument("mapping", help="variable-mapping JSON")
    ap.add_argument("out_dir", help="output dataset directory")
    ap.add_argument("--name", default=None, help="dataset name for meta.json")
    args = ap.parse_args()

    with open(args.mapping) as f:
        mapping = json.load(f)
    data = load_mat(args.recording)

    imu_t = as_column(get(data, mapping, "imu_time"))
    accel = as_rows(get(data, mapping, "accel"), 3, "accel") * mapping.get("accel_scale", 1.0)
    gyro = as_rows(get(data, mapping, "gyro"), 3, "gyro") * mapping.get("gyro_scale", 1.0)
    geometry = as_rows(get(data, mapping, "geometry"), 3, "geometry") * mapping.get(
        "pos_scale", 1.0)
    n_mag = geometry.shape[0]
    mag_t = as_column(get(data, mapping, "mag_time"))
    mag = as_rows(get(data, mapping, "mag"), 3 * n_mag, "mag") * mapping.get("mag_scale", 1.0)

    os.makedirs(args.out_dir, exist_ok=True)
    write_table(os.path.join(args.out_dir, "imu.txt"),
                "t sx sy sz wx wy wz (s, m/s^2, rad/s)",
                np.column_stack([imu_t, accel, gyro]))
    write_table(os.path.join(args.out_dir, "mag.txt"),
                "t then 3N stacked magnetometer values (s, uT)",
                np.column_stack([mag_t, mag]))
    with open(os.path.join(args.out_dir, "geometry.txt"), "w") as f:
        f.write("# id x y z (meters, body frame)\n")
        for i, row in enumerate(geometry):
            f.write(f"{i} " + " ".join(f"{x:.17g}" for x in row) + "\n")

    truth_t = get(data, mapping, "truth_time", required=False)
    if truth_t is not None:
        truth_t = as_column(truth_t)
        pos = as_rows(get(data, mapping, "truth_pos"), 3, "truth_pos") * mapping.get(
            "pos_scale", 1.0)
        quat = as_rows(get(data, mapping, "truth_quat"), 4, "truth_quat")
        if mapping.get("quat_order", "wxyz") == "xyzw":
            quat = quat[:, [3, 0, 1, 2]]
        quat = quat / np.linalg.norm(quat, axis=1, keepdims=True)
        write_table(os.path.join(args.out_dir, "groundtruth.txt"),
                    "t px py pz qw qx qy qz (s, m)",
                    np.column_stack([truth_t, pos, quat]))

    meta = {
        "name": args.name or os.path.basename(os.path.normpath(args.out_dir)),
        "n_mag": int(n_mag),
        "imu_rate": float((len(imu_t) - 1) / (imu_t[-1] - imu_t[0])),
        "mag_rate": float((len(mag_t) - 1) / (mag_t[-1] - mag_t[0])),
        "geometry": "geometry.txt",
        "units": {"position": "m", "field": "uT", "time": "s"},
    }
    with open(os.path.join(args.out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(f"wrote {args.out_dir}: {len(imu_t)} IMU samples, {len(mag_t)} mag rows, "
          f"N = {n_mag}")


if __name__ == "__main__":
    main()
