#include "hcd/geometry.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace hcd {

bool is_spd(const Mat2& a)
{
    if (std::abs(a(0, 1) - a(1, 0)) > 1e-14 * (std::abs(a(0, 1)) + 1.0))
        return false;
    return a(0, 0) > 0.0 && a.determinant() > 0.0;
}

bool Shape::contains(Point p) const
{
    const double dx = p.x - center.x;
    const double dy = p.y - center.y;
    if (kind == ShapeKind::Disk)
        return dx * dx + dy * dy < radius * radius;
    return std::abs(dx) < radius && std::abs(dy) < radius;
}

double Shape::area() const
{
    return kind == ShapeKind::Disk ? std::numbers::pi * radius * radius : 4.0 * radius * radius;
}

double Shape::diameter() const
{
    return kind == ShapeKind::Disk ? 2.0 * radius : 2.0 * std::numbers::sqrt2 * radius;
}

Box Shape::bounding_box() const
{
    return {center.x - radius, center.y - radius, center.x + radius, center.y + radius};
}

bool Shape::meets_closed_disk(double R) const
{
    if (R <= 0.0)
        return false;
    if (kind == ShapeKind::Disk)
        return norm(center) <= R + radius;
    // distance from the origin to the closed square
    const double dx = std::max(std::abs(center.x) - radius, 0.0);
    const double dy = std::max(std::abs(center.y) - radius, 0.0);
    return std::hypot(dx, dy) <= R;
}

void RandomMediumSpec::validate() const
{
    if (cell_size != 1.0)
        throw ConstraintViolation("cell_size is fixed to 1");
    if (!(r_min > 0.0) || r_max < r_min)
        throw ConstraintViolation("radius law requires 0 < r_min <= r_max");
    if (jitter < 0.0 || jitter_quantum < 0.0)
        throw ConstraintViolation("jitter and jitter_quantum must be non-negative");
    if (!(buffer_gap > 0.0))
        throw ConstraintViolation("buffer_gap must be positive");
    if (r_max + jitter + buffer_gap >= 0.5 * cell_size) {
        std::ostringstream msg;
        msg << "r_max + jitter + buffer_gap = " << r_max + jitter + buffer_gap
            << " must be < 1/2: buffers would leave their cells";
        throw ConstraintViolation(msg.str());
    }
}

double RandomMediumSpec::mean_area() const
{
    // E[r^2] for r ~ U[r_min, r_max]
    const double er2 = (r_min * r_min + r_min * r_max + r_max * r_max) / 3.0;
    return shape == ShapeKind::Disk ? std::numbers::pi * er2 : 4.0 * er2;
}

double InclusionRealization::volume_fraction() const
{
    double a = 0.0;
    for (const auto& inc : inclusions)
        a += inc.shape.area();
    return a / region.area();
}

void DefectSpec::validate() const
{
    if (radius < 0.0)
        throw ConstraintViolation("defect radius must be non-negative");
    if (!is_spd(A2))
        throw ConstraintViolation("A2 must be symmetric positive definite");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::int64_t cell_key(std::int64_t i, std::int64_t j) { return (i << 32) ^ (j & 0xffffffffll); }

/// Independent stream per lattice cell, so a cell's draw never depends on the region.
std::mt19937_64 cell_stream(std::uint64_t seed, int i, int j)
{
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)));
    s = splitmix64(s ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(j)) << 1));
    return std::mt19937_64(s);
}

double draw_offset(std::mt19937_64& rng, const RandomMediumSpec& spec)
{
    if (spec.jitter == 0.0)
        return 0.0;
    if (spec.jitter_quantum > 0.0) {
        const int steps = static_cast<int>(std::floor(spec.jitter / spec.jitter_quantum + 1e-9));
        std::uniform_int_distribution<int> d(-steps, steps);
        return spec.jitter_quantum * d(rng);
    }
    std::uniform_real_distribution<double> d(-spec.jitter, spec.jitter);
    return d(rng);
}

} // namespace

InclusionRealization sample_realization(const RandomMediumSpec& spec, const Box& region,
                                        std::uint64_t seed)
{
    spec.validate();
    if (region.width() < spec.cell_size || region.height() < spec.cell_size)
        throw ConstraintViolation("region side must be at least one cell");

    InclusionRealization out;
    out.region = region;
    out.spec = spec;
    out.seed = seed;

    const int i0 = static_cast<int>(std::floor(region.x0));
    const int i1 = static_cast<int>(std::ceil(region.x1));
    const int j0 = static_cast<int>(std::floor(region.y0));
    const int j1 = static_cast<int>(std::ceil(region.y1));
    for (int j = j0; j < j1; ++j) {
        for (int i = i0; i < i1; ++i) {
            auto rng = cell_stream(seed, i, j);
            double r = spec.r_min;
            if (spec.r_max > spec.r_min)
                r = std::uniform_real_distribution<double>(spec.r_min, spec.r_max)(rng);
            const double ox = draw_offset(rng, spec);
            const double oy = draw_offset(rng, spec);
            const Point c{i + 0.5 + ox, j + 0.5 + oy};
            Inclusion inc;
            inc.cell_i = i;
            inc.cell_j = j;
            inc.shape = {spec.shape, c, r};
            inc.buffer = {spec.shape, c, r + spec.buffer_gap};
            if (region.contains(inc.buffer.bounding_box()))
                out.inclusions.push_back(inc);
        }
    }
    return out;
}

ScaledGeometry scale_and_filter(const InclusionRealization& real, double epsilon,
                                const DefectSpec& defect)
{
    if (!(epsilon > 0.0) || epsilon > 1.0)
        throw ConfigError("epsilon must lie in (0, 1]");
    defect.validate();

    ScaledGeometry g;
    g.epsilon = epsilon;
    g.region = real.region.scaled(epsilon);
    g.defect = defect;
    g.cell_size = real.spec.cell_size;
    for (std::size_t k = 0; k < real.inclusions.size(); ++k) {
        const Shape s = real.inclusions[k].shape.scaled(epsilon);
        if (s.meets_closed_disk(defect.radius)) {
            ++g.removed;
            continue;
        }
        g.kept.push_back(s);
        g.source_index.push_back(static_cast<int>(k));
    }
    g.build_index();
    return g;
}

void ScaledGeometry::build_index()
{
    cell_lookup_.clear();
    cell_lookup_.reserve(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const Point c{kept[k].center.x / epsilon, kept[k].center.y / epsilon};
        const auto i = static_cast<std::int64_t>(std::floor(c.x / cell_size));
        const auto j = static_cast<std::int64_t>(std::floor(c.y / cell_size));
        cell_lookup_[cell_key(i, j)] = static_cast<int>(k);
    }
}

int ScaledGeometry::inclusion_at(Point x) const
{
    // buffers sit inside their own cell, so only the cell containing x can hold it
    const auto i = static_cast<std::int64_t>(std::floor(x.x / (epsilon * cell_size)));
    const auto j = static_cast<std::int64_t>(std::floor(x.y / (epsilon * cell_size)));
    const auto it = cell_lookup_.find(cell_key(i, j));
    if (it == cell_lookup_.end())
        return -1;
    return kept[it->second].contains(x) ? it->second : -1;
}

Phase ScaledGeometry::phase_unchecked(Point x) const
{
    if (defect.contains(x))
        return Phase::Defect;
    return inclusion_at(x) >= 0 ? Phase::Inclusion : Phase::Matrix;
}

Phase ScaledGeometry::phase_at(Point x) const
{
    if (!region.contains(x))
        throw DomainError("point outside geometry region");
    return phase_unchecked(x);
}

double ScaledGeometry::min_radius() const
{
    double r = std::numeric_limits<double>::infinity();
    for (const auto& s : kept)
        r = std::min(r, s.radius);
    return r;
}

AssumptionAudit audit_assumption(const InclusionRealization& real)
{
    AssumptionAudit audit;
    auto fail = [&](const Inclusion& inc, const std::string& what) {
        audit.ok = false;
        std::ostringstream os;
        os << "cell (" << inc.cell_i << "," << inc.cell_j << "): " << what;
        audit.violations.push_back(os.str());
    };
    constexpr double frame = 0.5; // unit cell mapped to side 1/2
    for (const auto& inc : real.inclusions) {
        const Box o = inc.shape.bounding_box();
        const Box b = inc.buffer.bounding_box();
        const Box cell{static_cast<double>(inc.cell_i), static_cast<double>(inc.cell_j),
                       inc.cell_i + 1.0, inc.cell_j + 1.0};
        if (!(inc.buffer.radius > inc.shape.radius))
            fail(inc, "inclusion not strictly inside buffer");
        if (!cell.contains(b))
            fail(inc, "buffer leaves its cell");
        if (!(frame * inc.shape.diameter() < 0.5))
            fail(inc, "diameter bound");
        // shift by the bottom-left corner D and by d_{1/4}, then test against [-1/2,1/2]^2
        const double dx = frame * o.x0 + 0.25;
        const double dy = frame * o.y0 + 0.25;
        const Box shifted{frame * b.x0 - dx, frame * b.y0 - dy, frame * b.x1 - dx, frame * b.y1 - dy};
        if (!Box{-0.5, -0.5, 0.5, 0.5}.contains(shifted))
            fail(inc, "shifted buffer outside [-1/2,1/2]^2");
    }
    return audit;
}

const char* to_string(ShapeKind k) { return k == ShapeKind::Disk ? "disk" : "square"; }

ShapeKind shape_kind_from_string(const std::string& s)
{
    if (s == "disk")
        return ShapeKind::Disk;
    if (s == "square")
        return ShapeKind::Square;
    throw ConfigError("unknown shape kind: " + s);
}

void write_realization(std::ostream& os, const InclusionRealization& real)
{
    os << std::setprecision(17);
    os << "# shape " << to_string(real.spec.shape) << "\n";
    os << "# region " << real.region.x0 << " " << real.region.y0 << " " << real.region.x1 << " "
       << real.region.y1 << "\n";
    os << "# seed " << real.seed << "\n";
    os << "# buffer_gap " << real.spec.buffer_gap << "\n";
    os << "# cell_i cell_j center_x center_y radius\n";
    for (const auto& inc : real.inclusions)
        os << inc.cell_i << " " << inc.cell_j << " " << inc.shape.center.x << " "
           << inc.shape.center.y << " " << inc.shape.radius << "\n";
}

InclusionRealization read_realization(std::istream& is)
{
    InclusionRealization real;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string hash, key;
            ls >> hash >> key;
            if (key == "shape") {
                std::string v;
                ls >> v;
                real.spec.shape = shape_kind_from_string(v);
            } else if (key == "region") {
                ls >> real.region.x0 >> real.region.y0 >> real.region.x1 >> real.region.y1;
            } else if (key == "seed") {
                ls >> real.seed;
            } else if (key == "buffer_gap") {
                ls >> real.spec.buffer_gap;
            }
            continue;
        }
        Inclusion inc;
        double cx = 0, cy = 0, r = 0;
        if (!(ls >> inc.cell_i >> inc.cell_j >> cx >> cy >> r))
            throw ConfigError("malformed realization record: " + line);
        inc.shape = {real.spec.shape, {cx, cy}, r};
        inc.buffer = {real.spec.shape, {cx, cy}, r + real.spec.buffer_gap};
        real.inclusions.push_back(inc);
    }
    real.spec.seed = real.seed;
    return real;
}

} // namespace hcd
