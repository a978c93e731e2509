pub type Point = [f64; 2];

/// Closed segment between two points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn contains(&self, p: Point) -> bool {
        orient(self.a, self.b, p) == 0.0 && within_box(self.a, self.b, p)
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn within_box(a: Point, b: Point, p: Point) -> bool {
    a[0].min(b[0]) <= p[0] && p[0] <= a[0].max(b[0]) && a[1].min(b[1]) <= p[1] && p[1] <= a[1].max(b[1])
}

/// True when the closed segments share at least one point (touching counts).
pub fn segments_intersect(p: Segment, q: Segment) -> bool {
    let d1 = orient(q.a, q.b, p.a);
    let d2 = orient(q.a, q.b, p.b);
    let d3 = orient(p.a, p.b, q.a);
    let d4 = orient(p.a, p.b, q.b);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    (d1 == 0.0 && within_box(q.a, q.b, p.a))
        || (d2 == 0.0 && within_box(q.a, q.b, p.b))
        || (d3 == 0.0 && within_box(p.a, p.b, q.a))
        || (d4 == 0.0 && within_box(p.a, p.b, q.b))
}

pub fn distance(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}
