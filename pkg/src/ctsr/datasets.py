"""Structured-grid spatio-temporal datasets: storage, stencils, sampling.

Fields are float64 arrays of shape (times, *grid_shape).  Spatial
derivatives use second-order central stencils; mixed partials apply the
axis stencils sequentially in sorted axis order, so only the sorted
multi-index is ever computed or cached.  Clamped (non-periodic) axes get
NaN margins, and sampling keeps away from them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

PERIODIC = "periodic"
CLAMPED = "clamped"


class DatasetFormatError(Exception):
    pass


@dataclass(frozen=True)
class QuantitySpec:
    """A named tensor quantity and the channel name of each component."""

    name: str
    order: int
    symmetric: bool
    components: dict[tuple[int, ...], str]

    def channels(self) -> list[str]:
        out = []
        for _, ch in sorted(self.components.items()):
            if ch not in out:
                out.append(ch)
        return out


@dataclass
class GridDataset:
    spatial_dim: int
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    dt: float
    times: int
    boundary: tuple[str, ...]
    fields: dict[str, np.ndarray]
    quantities: dict[str, QuantitySpec] = dc_field(default_factory=dict)
    time_derivatives: dict[str, np.ndarray] = dc_field(default_factory=dict)
    derivatives: dict[tuple[str, tuple[int, ...]], np.ndarray] = dc_field(
        default_factory=dict)
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if len(self.shape) != self.spatial_dim:
            raise ValueError("shape does not match spatial_dim")
        if any(s <= 0 for s in self.spacing) or self.dt <= 0:
            raise ValueError("spacing and dt must be positive")
        if any(b not in (PERIODIC, CLAMPED) for b in self.boundary):
            raise ValueError(f"bad boundary spec {self.boundary}")
        want = (self.times,) + self.shape
        for name, arr in {**self.fields, **self.time_derivatives}.items():
            if arr.shape != want:
                raise ValueError(
                    f"field {name}: shape {arr.shape}, expected {want}")

    @property
    def steady(self) -> bool:
        return self.times == 1


def _d1(arr: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2.0 * h)
    out = np.full_like(arr, np.nan)
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    mid = [slice(None)] * arr.ndim
    lo[axis] = slice(0, -2)
    hi[axis] = slice(2, None)
    mid[axis] = slice(1, -1)
    out[tuple(mid)] = (arr[tuple(hi)] - arr[tuple(lo)]) / (2.0 * h)
    return out


def _d2(arr: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(arr, -1, axis) + np.roll(arr, 1, axis) - 2.0 * arr) / (h * h)
    out = np.full_like(arr, np.nan)
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    mid = [slice(None)] * arr.ndim
    lo[axis] = slice(0, -2)
    hi[axis] = slice(2, None)
    mid[axis] = slice(1, -1)
    out[tuple(mid)] = (arr[tuple(hi)] + arr[tuple(lo)]
                       - 2.0 * arr[tuple(mid)]) / (h * h)
    return out


def fd_derivative(dataset: GridDataset, channel: str,
                  axes: tuple[int, ...]) -> np.ndarray:
    """Spatial derivative of a field channel along the given axes.

    The result is cached on the dataset keyed by the sorted multi-index;
    datasets generated with exact derivatives pre-populate that cache.
    """
    if len(axes) == 0:
        return dataset.fields[channel]
    if len(axes) > 2:
        raise ValueError("derivative depth is limited to 2")
    key = (channel, tuple(sorted(axes)))
    if key in dataset.derivatives:
        return dataset.derivatives[key]

    saxes = key[1]
    for ax in set(saxes):
        n = dataset.shape[ax]
        need = 2 * saxes.count(ax) + 1 if dataset.boundary[ax] == CLAMPED else 3
        if n < need:
            raise ValueError(
                f"axis {ax}: grid size {n} too small for a depth-"
                f"{len(saxes)} stencil")

    arr = dataset.fields[channel]
    if len(saxes) == 2 and saxes[0] == saxes[1]:
        ax = saxes[0]
        out = _d2(arr, ax + 1, dataset.spacing[ax],
                  dataset.boundary[ax] == PERIODIC)
    else:
        out = arr
        for ax in saxes:
            out = _d1(out, ax + 1, dataset.spacing[ax],
                      dataset.boundary[ax] == PERIODIC)
    dataset.derivatives[key] = out
    return out


def time_derivative(dataset: GridDataset, channel: str,
                    t_index: int) -> np.ndarray:
    """Central-difference time derivative of one snapshot."""
    if channel in dataset.time_derivatives:
        return dataset.time_derivatives[channel][t_index]
    if not 1 <= t_index <= dataset.times - 2:
        raise ValueError(
            f"t_index {t_index} is a boundary snapshot "
            f"(need 1..{dataset.times - 2})")
    arr = dataset.fields[channel]
    return (arr[t_index + 1] - arr[t_index - 1]) / (2.0 * dataset.dt)


def time_derivative_field(dataset: GridDataset, channel: str) -> np.ndarray:
    """Full (times, *shape) time derivative; NaN at boundary snapshots
    unless exact values were stored with the dataset."""
    if channel in dataset.time_derivatives:
        return dataset.time_derivatives[channel]
    arr = dataset.fields[channel]
    out = np.full_like(arr, np.nan)
    if dataset.times >= 3:
        out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * dataset.dt)
    return out


@dataclass
class SampleTable:
    """Random interior space-time sample locations over a dataset.

    Rows are ordered snapshot-major: all spatial points of the first
    sampled snapshot, then the next.  Steady tables have a single
    all-zero time index per spatial point.
    """

    dataset: GridDataset
    space_indices: np.ndarray  # (n_space, spatial_dim) integer grid indices
    time_indices: np.ndarray   # (n_t,) snapshot indices
    seed: int

    @property
    def n_rows(self) -> int:
        return len(self.space_indices) * len(self.time_indices)

    def _flat_space(self) -> np.ndarray:
        return np.ravel_multi_index(self.space_indices.T,
                                    self.dataset.shape)

    def gather(self, channel: str, axes: tuple[int, ...] = ()) -> np.ndarray:
        """Values of a (derivative of a) channel at every sample row."""
        arr = fd_derivative(self.dataset, channel, axes)
        flat = arr.reshape(self.dataset.times, -1)[:, self._flat_space()]
        return flat[self.time_indices].reshape(-1)

    def gather_time_derivative(self, channel: str) -> np.ndarray:
        arr = time_derivative_field(self.dataset, channel)
        flat = arr.reshape(self.dataset.times, -1)[:, self._flat_space()]
        return flat[self.time_indices].reshape(-1)


def sample_points(dataset: GridDataset, n_space: int, n_time: int,
                  seed: int, spatial_margin: int = 2,
                  time_margin: int = 1) -> SampleTable:
    """Draw interior sample locations without replacement from a seeded
    generator.  n_time = 0 requests a steady (spatial-only) table."""
    rng = np.random.default_rng(seed)

    lo, hi = [], []
    for ax, n in enumerate(dataset.shape):
        m = 0 if dataset.boundary[ax] == PERIODIC else spatial_margin
        if n - 2 * m <= 0:
            raise ValueError(f"axis {ax}: no interior points with margin {m}")
        lo.append(m)
        hi.append(n - m)
    interior_shape = tuple(h - l for l, h in zip(lo, hi))
    n_interior = int(np.prod(interior_shape))
    if n_space > n_interior:
        raise ValueError(
            f"requested {n_space} spatial points, only {n_interior} interior"
            " points available")
    flat = np.sort(rng.choice(n_interior, size=n_space, replace=False))
    space = np.stack(np.unravel_index(flat, interior_shape), axis=1)
    space = space + np.asarray(lo)

    if n_time == 0:
        times = np.zeros(1, dtype=int)
    else:
        t_lo, t_hi = time_margin, dataset.times - time_margin
        avail = t_hi - t_lo
        if n_time > avail:
            raise ValueError(
                f"requested {n_time} snapshots, only {avail} interior"
                " snapshots available")
        times = np.sort(rng.choice(avail, size=n_time, replace=False)) + t_lo
    return SampleTable(dataset, space, times, seed)


def save_dataset(dataset: GridDataset, path) -> None:
    """Single-file format: one JSON header line, then little-endian float64
    payloads for every field (and stored exact time derivatives, and any
    pre-computed spatial-derivative channels), snapshot-major, in manifest
    order.  Persisting the derivative cache keeps exactly-generated data
    exact across a round trip instead of silently falling back to
    stencils on reload."""
    header = {
        "spatial_dim": dataset.spatial_dim,
        "shape": list(dataset.shape),
        "spacing": list(dataset.spacing),
        "dt": dataset.dt,
        "times": dataset.times,
        "boundary": list(dataset.boundary),
        "fields": sorted(dataset.fields),
        "time_derivative_fields": sorted(dataset.time_derivatives),
        "derivative_fields": [[ch, list(axes)]
                              for ch, axes in sorted(dataset.derivatives)],
        "quantities": {
            name: {
                "order": q.order,
                "symmetric": q.symmetric,
                "components": {",".join(map(str, k)): v
                               for k, v in sorted(q.components.items())},
            } for name, q in sorted(dataset.quantities.items())
        },
        "provenance": dataset.provenance,
        "endianness": "little",
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in header["fields"]:
            fh.write(np.ascontiguousarray(
                dataset.fields[name], dtype="<f8").tobytes())
        for name in header["time_derivative_fields"]:
            fh.write(np.ascontiguousarray(
                dataset.time_derivatives[name], dtype="<f8").tobytes())
        for ch, axes in header["derivative_fields"]:
            fh.write(np.ascontiguousarray(
                dataset.derivatives[(ch, tuple(axes))],
                dtype="<f8").tobytes())


def load_dataset(path) -> GridDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DatasetFormatError("missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetFormatError(f"malformed header: {e}") from None
    for key in ("spatial_dim", "shape", "times", "fields", "dtype"):
        if key not in header:
            raise DatasetFormatError(f"header missing {key!r}")
    if header["dtype"] != "<f8":
        raise DatasetFormatError(f"unsupported dtype {header['dtype']}")

    shape = tuple(header["shape"])
    times = header["times"]
    per_field = times * int(np.prod(shape))
    deriv_keys = [(ch, tuple(int(a) for a in axes))
                  for ch, axes in header.get("derivative_fields", [])]
    names = (list(header["fields"]) + list(header["time_derivative_fields"])
             + deriv_keys)
    payload = raw[nl + 1:]
    expected = len(names) * per_field * 8
    if len(payload) != expected:
        raise DatasetFormatError(
            f"payload size {len(payload)} bytes, expected {expected}")

    # payloads are positional: a time-derivative channel shares its field's
    # name, so keying by name would collide
    arrays = []
    for k in range(len(names)):
        start = k * per_field * 8
        arrays.append(np.frombuffer(
            payload[start:start + per_field * 8], dtype="<f8"
        ).reshape((times,) + shape).copy())

    quantities = {}
    for name, q in header.get("quantities", {}).items():
        comps = {tuple(int(x) for x in k.split(",") if x != ""): v
                 for k, v in q["components"].items()}
        quantities[name] = QuantitySpec(name, q["order"], q["symmetric"], comps)

    n_fields = len(header["fields"])
    n_td = n_fields + len(header["time_derivative_fields"])
    return GridDataset(
        spatial_dim=header["spatial_dim"],
        shape=shape,
        spacing=tuple(header["spacing"]),
        dt=header["dt"],
        times=times,
        boundary=tuple(header["boundary"]),
        fields={n: arrays[i] for i, n in enumerate(names[:n_fields])},
        time_derivatives={n: arrays[n_fields + i]
                          for i, n in enumerate(names[n_fields:n_td])},
        derivatives={k: arrays[n_td + i]
                     for i, k in enumerate(names[n_td:])},
        quantities=quantities,
        provenance=header.get("provenance", {}),
    )
