#pragma once

#include "hcd/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <vector>

namespace hcd {

enum class ShapeKind : std::uint8_t { Disk, Square };

/// Disk of radius `radius`, or axis-aligned square of half side `radius`.
struct Shape {
    ShapeKind kind = ShapeKind::Disk;
    Point center{};
    double radius = 0.0;

    bool contains(Point p) const;
    double area() const;
    double diameter() const;
    Box bounding_box() const;
    /// True if the closure of this shape meets the closed disk of radius R at the origin.
    bool meets_closed_disk(double R) const;
    Shape scaled(double s) const { return {kind, {s * center.x, s * center.y}, s * radius}; }
};

/// Per-cell i.i.d. law of one inclusion per unit lattice cell.
struct RandomMediumSpec {
    double cell_size = 1.0;
    ShapeKind shape = ShapeKind::Disk;
    double r_min = 0.3;
    double r_max = 0.3;
    /// Max center offset per axis from the cell center.
    double jitter = 0.0;
    /// 0 gives continuous jitter; otherwise offsets are integer multiples of this step.
    double jitter_quantum = 0.0;
    /// Width of the ring between inclusion and its buffer.
    double buffer_gap = 0.05;
    std::uint64_t seed = 0;

    /// Throws ConstraintViolation when the buffer cannot fit inside its cell.
    void validate() const;
    bool degenerate() const { return r_min == r_max && jitter == 0.0; }
    /// Mean inclusion area per cell, E[|O(r)|].
    double mean_area() const;
};

struct Inclusion {
    int cell_i = 0;
    int cell_j = 0;
    Shape shape;
    Shape buffer;
};

struct InclusionRealization {
    Box region;
    RandomMediumSpec spec;
    std::uint64_t seed = 0;
    std::vector<Inclusion> inclusions;

    double volume_fraction() const;
};

struct DefectSpec {
    /// Defect disk radius centered at the origin; 0 means no defect.
    double radius = 0.0;
    Mat2 A2 = Mat2::Identity();

    bool empty() const { return radius <= 0.0; }
    bool contains(Point p) const { return !empty() && norm(p) < radius; }
    void validate() const;
};

enum class Phase : std::uint8_t { Matrix = 0, Inclusion = 1, Defect = 2 };

struct ScaledGeometry {
    double epsilon = 1.0;
    Box region;
    DefectSpec defect;
    double cell_size = 1.0;
    std::vector<Shape> kept;
    /// Index of each kept inclusion in the source realization.
    std::vector<int> source_index;
    int removed = 0;

    Phase phase_at(Point x) const;
    /// Same as phase_at without the region check.
    Phase phase_unchecked(Point x) const;
    /// Kept inclusion containing x, or -1.
    int inclusion_at(Point x) const;
    double min_radius() const;

    void build_index();

private:
    std::unordered_map<std::int64_t, int> cell_lookup_;
};

InclusionRealization sample_realization(const RandomMediumSpec& spec, const Box& region,
                                        std::uint64_t seed);

ScaledGeometry scale_and_filter(const InclusionRealization& real, double epsilon,
                                const DefectSpec& defect);

struct AssumptionAudit {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Disjointness, containment and the bounded-diameter conditions, checked in the frame
/// where the unit cell has side 1/2.
AssumptionAudit audit_assumption(const InclusionRealization& real);

void write_realization(std::ostream& os, const InclusionRealization& real);
InclusionRealization read_realization(std::istream& is);

const char* to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

} // namespace hcd
