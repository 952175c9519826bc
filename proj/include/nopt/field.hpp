#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nopt/tensor.hpp"

namespace nopt {

/// Uniform periodic 2D grid. Extents default to [0,1]^2; Reaction-Diffusion
/// uses [-1,1]^2.
struct Grid2D {
    std::size_t H = 0, W = 0;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

    void validate() const {
        if (H < 8 || W < 8 || H % 2 || W % 2)
            throw std::invalid_argument(
                "Grid2D: spatial dims must be even and >= 8");
    }
    double hx() const { return (x1 - x0) / double(W); }
    double hy() const { return (y1 - y0) / double(H); }
};

/// Channel-major raster values indexed [c][y][x], f32.
struct Field {
    std::size_t C = 0;
    Grid2D grid;
    std::vector<float> values;

    Field() = default;
    Field(std::size_t c, Grid2D g)
        : C(c), grid(g), values(c * g.H * g.W, 0.f) {}

    std::size_t plane() const { return grid.H * grid.W; }
    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return values[(c * grid.H + y) * grid.W + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return values[(c * grid.H + y) * grid.W + x];
    }

    Tensor<float> to_tensor() const {
        Tensor<float> t({C, grid.H, grid.W});
        t.data = values;
        return t;
    }
    static Field from_tensor(const Tensor<float>& t, Grid2D g) {
        Field f(t.shape.at(0), g);
        f.values = t.data;
        return f;
    }
};

/// T shape-consistent snapshots at a uniform recording step.
struct Trajectory {
    std::vector<Field> frames;
    double dt_record = 0.0;

    Trajectory() = default;
    explicit Trajectory(Field f) { frames.push_back(std::move(f)); }

    std::size_t T() const { return frames.size(); }
    void validate() const {
        if (frames.empty()) throw std::invalid_argument("Trajectory: T >= 1");
        for (const auto& f : frames)
            if (f.C != frames[0].C || f.grid.H != frames[0].grid.H ||
                f.grid.W != frames[0].grid.W)
                throw std::invalid_argument("Trajectory: inconsistent frames");
    }
};

/// One PDE sample; solution absent <=> unlabeled PDE data.
struct SampleRecord {
    Trajectory input;
    std::optional<Trajectory> solution;
    std::map<std::string, double> params;

    bool labeled() const { return solution.has_value(); }
};

}  // namespace nopt
