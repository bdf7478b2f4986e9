"""Parametric generator of small AP214-style B-rep STEP files.

Each class template builds a solid from a distinct family of faces
(prisms, cylinder bands, tori, B-spline blades, ...) and draws its
repetition counts and dimensions from a per-model RNG, so models of one
class share a topology family but differ in size.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np


def _real(x):
    return f"{x:.6f}" if math.isfinite(x) else "0."


def _pt(xyz):
    return "(" + ",".join(_real(v) for v in xyz) + ")"


def _refs(ids):
    return "(" + ",".join(f"#{i}" for i in ids) + ")"


class StepBuilder:
    """Accumulates DATA-section records and hands out instance ids."""

    def __init__(self):
        self.lines = []
        self.next_id = 1

    def add(self, body):
        iid = self.next_id
        self.next_id += 1
        self.lines.append(f"#{iid}={body};")
        return iid

    def entity(self, name, *args):
        return self.add(f"{name}(" + ",".join(args) + ")")

    # geometry

    def point(self, xyz):
        return self.entity("CARTESIAN_POINT", "''", _pt(xyz))

    def direction(self, xyz):
        v = np.asarray(xyz, dtype=float)
        n = np.linalg.norm(v)
        return self.entity("DIRECTION", "''", _pt(v / n if n else (0.0, 0.0, 1.0)))

    def axis(self, origin, z=(0, 0, 1), x=(1, 0, 0)):
        return self.entity("AXIS2_PLACEMENT_3D", "''", f"#{self.point(origin)}",
                           f"#{self.direction(z)}", f"#{self.direction(x)}")

    def vertex(self, xyz):
        p = self.point(xyz)
        return self.entity("VERTEX_POINT", "''", f"#{p}"), p

    def line_edge(self, v0, v1, p0, xyz0, xyz1):
        d = self.direction(np.subtract(xyz1, xyz0))
        vec = self.entity("VECTOR", "''", f"#{d}", _real(float(np.linalg.norm(np.subtract(xyz1, xyz0)))))
        line = self.entity("LINE", "''", f"#{p0}", f"#{vec}")
        return self.entity("EDGE_CURVE", "''", f"#{v0}", f"#{v1}", f"#{line}", ".T.")

    def circle(self, centre, radius, normal=(0, 0, 1)):
        return self.entity("CIRCLE", "''", f"#{self.axis(centre, normal)}", _real(radius))

    def oriented(self, edge, sense=True):
        return self.entity("ORIENTED_EDGE", "''", "*", "*", f"#{edge}", ".T." if sense else ".F.")

    def face(self, edges, surface, inner_loops=()):
        oes = [self.oriented(e, s) for e, s in edges]
        loop = self.entity("EDGE_LOOP", "''", _refs(oes))
        bounds = [self.entity("FACE_OUTER_BOUND", "''", f"#{loop}", ".T.")]
        for inner in inner_loops:
            oes = [self.oriented(e, s) for e, s in inner]
            il = self.entity("EDGE_LOOP", "''", _refs(oes))
            bounds.append(self.entity("FACE_BOUND", "''", f"#{il}", ".T."))
        return self.entity("ADVANCED_FACE", "''", _refs(bounds), f"#{surface}", ".T.")

    def plane(self, origin, normal):
        return self.entity("PLANE", "''", f"#{self.axis(origin, normal, _perp(normal))}")


def _perp(n):
    n = np.asarray(n, dtype=float)
    trial = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return tuple(np.cross(n, trial))


# reusable solids


def prism(b, polygon, z0, z1, with_caps=True, holes=()):
    """Extrude a closed polygon; returns the list of face ids.

    Adds ``30 * m + 16`` instances for an m-gon with caps. Each ``(x, y, r)``
    in ``holes`` drills a vertical bore through both caps.
    """
    m = len(polygon)
    bot = [b.vertex((x, y, z0)) for x, y in polygon]
    top = [b.vertex((x, y, z1)) for x, y in polygon]
    xyz_b = [(x, y, z0) for x, y in polygon]
    xyz_t = [(x, y, z1) for x, y in polygon]
    ring_b = [b.line_edge(bot[i][0], bot[(i + 1) % m][0], bot[i][1], xyz_b[i], xyz_b[(i + 1) % m]) for i in range(m)]
    ring_t = [b.line_edge(top[i][0], top[(i + 1) % m][0], top[i][1], xyz_t[i], xyz_t[(i + 1) % m]) for i in range(m)]
    vert = [b.line_edge(bot[i][0], top[i][0], bot[i][1], xyz_b[i], xyz_t[i]) for i in range(m)]
    faces = []
    for i in range(m):
        j = (i + 1) % m
        mid = np.add(xyz_b[i], xyz_b[j]) / 2
        normal = (xyz_b[j][1] - xyz_b[i][1], xyz_b[i][0] - xyz_b[j][0], 0.0)
        surf = b.plane(tuple(mid), normal)
        faces.append(b.face([(ring_b[i], True), (vert[j], True), (ring_t[i], False), (vert[i], False)], surf))
    if with_caps:
        bores, inner_b, inner_t = [], [], []
        for x, y, r in holes:
            low = circle_edge(b, (x, y, z0), r)
            bore, high = cylinder_band(b, r, z0, z1, low, centre=(x, y))
            bores.append(bore)
            inner_b.append([(low[0], True)])
            inner_t.append([(high[0], False)])
        faces.append(b.face([(e, False) for e in reversed(ring_b)], b.plane((0, 0, z0), (0, 0, -1)), inner_b))
        faces.append(b.face([(e, True) for e in ring_t], b.plane((0, 0, z1), (0, 0, 1)), inner_t))
        faces += bores
    return faces


def circle_edge(b, centre, radius, normal=(0, 0, 1)):
    """A closed circular edge with one seam vertex; returns ``(edge, vertex, point, seam_xyz)``."""
    seam = np.add(centre, (radius, 0.0, 0.0))
    v, p = b.vertex(tuple(seam))
    c = b.circle(centre, radius, normal)
    return b.entity("EDGE_CURVE", "''", f"#{v}", f"#{v}", f"#{c}", ".T."), v, p, tuple(seam)


def cylinder_band(b, radius, z0, z1, lower=None, surface="CYLINDRICAL_SURFACE", centre=(0.0, 0.0)):
    """Side face of a cylinder between two circles; ``lower`` reuses a circle edge from a previous band."""
    x, y = centre
    if lower is None:
        lower = circle_edge(b, (x, y, z0), radius)
    upper = circle_edge(b, (x, y, z1), radius)
    seam = b.line_edge(lower[1], upper[1], lower[2], lower[3], upper[3])
    surf = b.entity(surface, "''", f"#{b.axis((x, y, z0))}", _real(radius))
    face = b.face([(lower[0], True), (seam, True), (upper[0], False), (seam, False)], surf)
    return face, upper


def disc(b, rim, centre_z, up=True, hole=None):
    surf = b.plane((0, 0, centre_z), (0, 0, 1 if up else -1))
    inner = [[(hole[0], not up)]] if hole is not None else ()
    return b.face([(rim[0], up)], surf, inner)


def regular_polygon(m, radius, phase=0.0):
    return [(radius * math.cos(phase + 2 * math.pi * i / m), radius * math.sin(phase + 2 * math.pi * i / m))
            for i in range(m)]


def bspline_patch(b, corners, rng, degree=3):
    """A B-spline surface face over four corner points, bounded by B-spline edges."""
    n_ctrl = degree + 1
    verts = [b.vertex(c) for c in corners]
    edges = []
    for i in range(4):
        a, c = corners[i], corners[(i + 1) % 4]
        ctrl = [b.point(tuple(np.add(a, np.multiply(np.subtract(c, a), t / degree)) + rng.normal(0, 0.05, 3)))
                for t in range(n_ctrl)]
        curve = b.entity("B_SPLINE_CURVE_WITH_KNOTS", "''", str(degree), _refs(ctrl), ".UNSPECIFIED.",
                         ".F.", ".F.", f"({n_ctrl},{n_ctrl})", "(0.,1.)", ".UNSPECIFIED.")
        edges.append(b.entity("EDGE_CURVE", "''", f"#{verts[i][0]}", f"#{verts[(i + 1) % 4][0]}", f"#{curve}", ".T."))
    grid = []
    for u in range(n_ctrl):
        row = []
        for v in range(n_ctrl):
            base = (np.multiply(corners[0], (1 - u / degree) * (1 - v / degree))
                    + np.multiply(corners[1], (u / degree) * (1 - v / degree))
                    + np.multiply(corners[2], (u / degree) * (v / degree))
                    + np.multiply(corners[3], (1 - u / degree) * (v / degree)))
            row.append(b.point(tuple(base + rng.normal(0, 0.1, 3))))
        grid.append("(" + ",".join(f"#{i}" for i in row) + ")")
    surf = b.entity("B_SPLINE_SURFACE_WITH_KNOTS", "''", str(degree), str(degree), "(" + ",".join(grid) + ")",
                    ".UNSPECIFIED.", ".F.", ".F.", ".F.", f"({n_ctrl},{n_ctrl})", f"({n_ctrl},{n_ctrl})",
                    "(0.,1.)", "(0.,1.)", ".UNSPECIFIED.")
    return b.face([(e, True) for e in edges], surf)


# class templates; each returns the face ids of its solid


def screw(b, rng):
    """Hexagonal head on a shank made of a chain of cylinder bands."""
    r = rng.uniform(2, 6)
    faces = prism(b, regular_polygon(6, r * 1.8), -r, 0.0)
    lower = None
    z = 0.0
    for _ in range(int(rng.integers(3, 12))):
        dz = rng.uniform(1, 3)
        face, lower = cylinder_band(b, r, z, z + dz, lower)
        faces.append(face)
        z += dz
    cone = b.entity("CONICAL_SURFACE", "''", f"#{b.axis((0, 0, z))}", _real(r), _real(0.785398))
    faces.append(b.face([(lower[0], True)], cone))
    return faces


def nut(b, rng):
    """Hexagonal prism pierced by a bore with chamfers."""
    r = rng.uniform(3, 10)
    h = rng.uniform(2, 8)
    faces = prism(b, regular_polygon(6, r), 0.0, h, with_caps=False)
    hole_bot = circle_edge(b, (0, 0, 0), r * 0.5)
    outer_bot = circle_edge(b, (0, 0, 0), r * 0.85)
    outer_top = circle_edge(b, (0, 0, h), r * 0.85)
    faces.append(disc(b, outer_bot, 0.0, up=False, hole=hole_bot))
    bore, hole_top = cylinder_band(b, r * 0.5, 0.0, h, hole_bot)
    faces.append(bore)
    faces.append(disc(b, outer_top, h, up=True, hole=hole_top))
    for _ in range(int(rng.integers(1, 4))):
        cone = b.entity("CONICAL_SURFACE", "''", f"#{b.axis((0, 0, h))}", _real(r * 0.85), _real(0.5236))
        faces.append(b.face([(outer_top[0], True)], cone))
    return faces


def hinge(b, rng):
    """Two thin leaves with drilled screw holes, joined by a knuckle around a pin."""
    faces = []
    length = rng.uniform(20, 50)
    lower = None
    for side in (-1, 1):
        w, t = rng.uniform(10, 30), rng.uniform(1, 3)
        x0 = 0.0 if side > 0 else -w
        n_holes = int(rng.integers(2, 6))
        holes = [(x0 + w / 2, length * (k + 1) / (n_holes + 1), rng.uniform(1.0, 2.0)) for k in range(n_holes)]
        faces += prism(b, [(x0, 0), (x0 + w, 0), (x0 + w, length), (x0, length)], 0.0, t, holes=holes)
    for k in range(int(rng.integers(2, 6))):
        face, lower = cylinder_band(b, 2.5, length * k / 5, length * (k + 1) / 5, lower)
        faces.append(face)
    return faces


def fan(b, rng):
    """Cylindrical hub carrying a ring of B-spline blades."""
    r = rng.uniform(3, 8)
    face, top = cylinder_band(b, r, 0.0, 4.0)
    faces = [face, disc(b, top, 4.0)]
    n = int(rng.integers(3, 10))
    for i in range(n):
        a = 2 * math.pi * i / n
        ca, sa = math.cos(a), math.sin(a)
        span = rng.uniform(10, 25)
        corners = [(r * ca, r * sa, 0.0), ((r + span) * ca, (r + span) * sa, 1.0),
                   ((r + span) * ca, (r + span) * sa, 3.0), (r * ca, r * sa, 4.0)]
        faces.append(bspline_patch(b, corners, rng))
    return faces


def bar(b, rng):
    """Straight extrusion of an irregular polygon with many sides."""
    m = int(rng.integers(4, 13))
    poly = [(rr * math.cos(2 * math.pi * i / m), rr * math.sin(2 * math.pi * i / m))
            for i, rr in enumerate(rng.uniform(5, 10, size=m))]
    return prism(b, poly, 0.0, rng.uniform(50, 300))


def wheel(b, rng):
    """Torus rim, cylindrical hub and spokes with spherical end caps."""
    big, small = rng.uniform(20, 40), rng.uniform(2, 6)
    rim_c = circle_edge(b, (0, 0, 0), big + small)
    torus = b.entity("TOROIDAL_SURFACE", "''", f"#{b.axis((0, 0, 0))}", _real(big), _real(small))
    faces = [b.face([(rim_c[0], True)], torus)]
    hub, _ = cylinder_band(b, rng.uniform(3, 6), -3.0, 3.0)
    faces.append(hub)
    for _ in range(int(rng.integers(3, 9))):
        spoke, end = cylinder_band(b, 1.0, 0.0, big)
        sphere = b.entity("SPHERICAL_SURFACE", "''", f"#{b.axis((0, 0, big))}", _real(1.0))
        faces += [spoke, b.face([(end[0], True)], sphere)]
    return faces


def spring(b, rng):
    """Coil approximated by elliptic extrusion segments."""
    faces = []
    for k in range(int(rng.integers(4, 12))):
        ax = b.axis((0, 0, 2.0 * k))
        ell = b.entity("ELLIPSE", "''", f"#{ax}", _real(rng.uniform(5, 8)), _real(rng.uniform(3, 5)))
        v, p = b.vertex((5.0, 0.0, 2.0 * k))
        e = b.entity("EDGE_CURVE", "''", f"#{v}", f"#{v}", f"#{ell}", ".T.")
        d = b.direction((0.0, 0.3, 1.0))
        vec = b.entity("VECTOR", "''", f"#{d}", _real(2.0))
        surf = b.entity("SURFACE_OF_LINEAR_EXTRUSION", "''", f"#{ell}", f"#{vec}")
        faces.append(b.face([(e, True)], surf))
    return faces


def bracket(b, rng):
    """L-shaped plate whose bends are trimmed cylindrical fillets."""
    faces = []
    t = rng.uniform(1, 4)
    for k in range(int(rng.integers(2, 6))):
        faces += prism(b, [(0, 0), (20, 0), (20, t), (0, t)], 30.0 * k, 30.0 * k + 20.0)
        circ = b.circle((0, 0, 30.0 * k + 25.0), 5.0, (1, 0, 0))
        p0, p1 = b.point((0, 5, 30.0 * k + 25)), b.point((0, 0, 30.0 * k + 30))
        trim = b.entity("TRIMMED_CURVE", "''", f"#{circ}", f"(#{p0})", f"(#{p1})", ".T.", ".CARTESIAN.")
        (v0, _), (v1, _) = b.vertex((0, 5, 30.0 * k + 25)), b.vertex((0, 0, 30.0 * k + 30))
        e = b.entity("EDGE_CURVE", "''", f"#{v0}", f"#{v1}", f"#{trim}", ".T.")
        surf = b.entity("CYLINDRICAL_SURFACE", "''", f"#{b.axis((0, 0, 30.0 * k + 25.0), (1, 0, 0))}", _real(5.0))
        faces.append(b.face([(e, True), (e, False)], surf))
    return faces


TEMPLATES: Dict[str, Callable] = {
    "screw": screw,
    "nut": nut,
    "hinge": hinge,
    "fan": fan,
    "bar": bar,
    "wheel": wheel,
    "spring": spring,
    "bracket": bracket,
}
DEFAULT_CLASSES = ("screw", "nut", "hinge", "fan", "bar", "wheel")


@dataclass(frozen=True)
class ClassSpec:
    name: str
    template: Callable


def _product_header(b, name):
    """Product/shape boilerplate; returns the id of the shape representation context."""
    app = b.entity("APPLICATION_CONTEXT", "'core data for automotive mechanical design processes'")
    b.entity("APPLICATION_PROTOCOL_DEFINITION", "'international standard'", "'automotive_design'", "2000", f"#{app}")
    pctx = b.entity("PRODUCT_CONTEXT", "''", f"#{app}", "'mechanical'")
    prod = b.entity("PRODUCT", f"'{name}'", f"'{name}'", "''", f"(#{pctx})")
    pdf = b.entity("PRODUCT_DEFINITION_FORMATION", "''", "''", f"#{prod}")
    pdctx = b.entity("PRODUCT_DEFINITION_CONTEXT", "'part definition'", f"#{app}", "'design'")
    pd = b.entity("PRODUCT_DEFINITION", "'design'", "''", f"#{pdf}", f"#{pdctx}")
    pds = b.entity("PRODUCT_DEFINITION_SHAPE", "''", "''", f"#{pd}")
    length = b.add("(LENGTH_UNIT()NAMED_UNIT(*)SI_UNIT(.MILLI.,.METRE.))")
    angle = b.add("(NAMED_UNIT(*)PLANE_ANGLE_UNIT()SI_UNIT($,.RADIAN.))")
    solid = b.add("(NAMED_UNIT(*)SI_UNIT($,.STERADIAN.)SOLID_ANGLE_UNIT())")
    unc = b.entity("UNCERTAINTY_MEASURE_WITH_UNIT", "LENGTH_MEASURE(1.E-07)", f"#{length}",
                   "'distance_accuracy_value'", "'confusion accuracy'")
    ctx = b.add(f"(GEOMETRIC_REPRESENTATION_CONTEXT(3)GLOBAL_UNCERTAINTY_ASSIGNED_CONTEXT((#{unc}))"
                f"GLOBAL_UNIT_ASSIGNED_CONTEXT((#{length},#{angle},#{solid}))REPRESENTATION_CONTEXT('',''))")
    return pds, ctx


def render_model(template, name, rng):
    """Part 21 text of one model."""
    b = StepBuilder()
    pds, ctx = _product_header(b, name)
    faces = template(b, rng)
    shell = b.entity("CLOSED_SHELL", "''", _refs(faces))
    brep = b.entity("MANIFOLD_SOLID_BREP", f"'{name}'", f"#{shell}")
    rep = b.entity("ADVANCED_BREP_SHAPE_REPRESENTATION", "''", f"(#{brep},#{b.axis((0, 0, 0))})", f"#{ctx}")
    b.entity("SHAPE_DEFINITION_REPRESENTATION", f"#{pds}", f"#{rep}")
    header = [
        "ISO-10303-21;",
        "HEADER;",
        "FILE_DESCRIPTION(('synthetic model'),'2;1');",
        f"FILE_NAME('{name}','2000-01-01T00:00:00',(''),(''),'stepgraph','stepgraph','');",
        "FILE_SCHEMA(('AUTOMOTIVE_DESIGN { 1 0 10303 214 1 1 1 1 }'));",
        "ENDSEC;",
        "DATA;",
    ]
    return "\n".join(header + b.lines + ["ENDSEC;", "END-ISO-10303-21;", ""])


def resolve_specs(class_specs):
    specs = []
    for s in class_specs:
        if isinstance(s, ClassSpec):
            specs.append(s)
        elif s in TEMPLATES:
            specs.append(ClassSpec(s, TEMPLATES[s]))
        else:
            raise ValueError(f"unknown class template {s!r}; known: {sorted(TEMPLATES)}")
    return specs


def model_rng(seed, class_index, model_index):
    return np.random.default_rng([seed, class_index, model_index])
