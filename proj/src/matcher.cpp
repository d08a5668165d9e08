#include "mcsam/matcher.hpp"

#include "mcsam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mcsam {

namespace F = torch::nn::functional;

void LossConfig::validate() const {
    if (lambda_cls < 0 || lambda_ce_seg < 0 || lambda_dice < 0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (num_points < 1) {
        throw ConfigError("num_points must be >= 1");
    }
    if (!(dice_eps > 0)) {
        throw ConfigError("dice_eps must be positive");
    }
    if (no_object_weight < 0) {
        throw ConfigError("no_object_weight must be non-negative");
    }
}

namespace {

// Shortest augmenting path with potentials; requires n <= m. 1-based internally.
std::vector<int64_t> solve_rows(const std::vector<std::vector<double>>& a, size_t n, size_t m) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(m + 1, 0.0);
    std::vector<size_t> p(m + 1, 0);
    std::vector<size_t> way(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        p[0] = i;
        size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const size_t i0 = p[j0];
            double delta = inf;
            size_t j1 = 0;
            for (size_t j = 1; j <= m; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int64_t> row_to_col(n, -1);
    for (size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) {
            row_to_col[p[j] - 1] = static_cast<int64_t>(j - 1);
        }
    }
    return row_to_col;
}

}  // namespace

Assignment linear_sum_assignment(const std::vector<std::vector<double>>& cost) {
    Assignment out;
    const size_t rows = cost.size();
    if (rows == 0) {
        return out;
    }
    const size_t cols = cost.front().size();
    for (const auto& row : cost) {
        if (row.size() != cols) {
            throw ShapeError("cost matrix rows differ in length");
        }
        for (double c : row) {
            if (!std::isfinite(c)) {
                throw NumericError("non-finite entry in assignment cost matrix");
            }
        }
    }
    if (cols == 0) {
        out.row_to_col.assign(rows, -1);
        return out;
    }
    if (rows <= cols) {
        out.row_to_col = solve_rows(cost, rows, cols);
    } else {
        std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
        for (size_t i = 0; i < rows; ++i) {
            for (size_t j = 0; j < cols; ++j) {
                t[j][i] = cost[i][j];
            }
        }
        const auto col_to_row = solve_rows(t, cols, rows);
        out.row_to_col.assign(rows, -1);
        for (size_t j = 0; j < cols; ++j) {
            out.row_to_col[static_cast<size_t>(col_to_row[j])] = static_cast<int64_t>(j);
        }
    }
    for (size_t i = 0; i < rows; ++i) {
        if (out.row_to_col[i] >= 0) {
            out.cost += cost[i][static_cast<size_t>(out.row_to_col[i])];
        }
    }
    return out;
}

Assignment linear_sum_assignment(const torch::Tensor& cost) {
    if (cost.dim() != 2) {
        throw ShapeError("cost matrix must be 2-D, got " + c10::str(cost.sizes()));
    }
    auto c = cost.detach().to(torch::kCPU, torch::kDouble).contiguous();
    auto acc = c.accessor<double, 2>();
    std::vector<std::vector<double>> dense(static_cast<size_t>(c.size(0)), std::vector<double>(c.size(1)));
    for (int64_t i = 0; i < c.size(0); ++i) {
        for (int64_t j = 0; j < c.size(1); ++j) {
            dense[i][j] = acc[i][j];
        }
    }
    return linear_sum_assignment(dense);
}

torch::Tensor point_sample(const torch::Tensor& input, const torch::Tensor& coords) {
    auto grid = (2.0 * coords - 1.0).unsqueeze(2);  // [N, P, 1, 2]
    auto out = F::grid_sample(input, grid.to(input.dtype()),
                              F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(false));
    return out.squeeze(3);
}

torch::Tensor matching_cost(const torch::Tensor& class_logits, const torch::Tensor& mask_logits,
                            const InstanceTarget& target, const LossConfig& cfg, const torch::Tensor& points) {
    const auto q = class_logits.size(0);
    const auto g = target.labels.size(0);
    auto log_probs = torch::log_softmax(class_logits, -1);
    auto cost_class = -log_probs.index_select(1, target.labels);  // [q, g]

    auto n = points.size(0);
    auto pts = points.unsqueeze(0);
    auto pred = point_sample(mask_logits.unsqueeze(1), pts.expand({q, n, 2})).squeeze(1);  // [q, n]
    auto gt = point_sample(target.masks.to(mask_logits.dtype()).unsqueeze(1), pts.expand({g, n, 2})).squeeze(1);

    // Pairwise BCE: softplus(-x) for positives, softplus(x) for negatives.
    auto pos = F::softplus(-pred);
    auto neg = F::softplus(pred);
    auto cost_ce = (torch::matmul(pos, gt.t()) + torch::matmul(neg, (1.0 - gt).t())) / static_cast<double>(n);

    auto prob = pred.sigmoid();
    auto numer = 2.0 * torch::matmul(prob, gt.t());
    auto denom = prob.sum(-1).unsqueeze(1) + gt.sum(-1).unsqueeze(0);
    auto cost_dice = 1.0 - (numer + cfg.dice_eps) / (denom + cfg.dice_eps);

    return cfg.lambda_cls * cost_class + cfg.lambda_ce_seg * cost_ce + cfg.lambda_dice * cost_dice;
}

MatchResult hungarian_match(const torch::Tensor& class_logits, const torch::Tensor& mask_logits,
                            const InstanceTarget& target, const LossConfig& cfg,
                            std::optional<at::Generator> generator) {
    torch::NoGradGuard no_grad;
    const auto q = class_logits.size(0);
    const auto g = target.labels.defined() ? target.labels.size(0) : 0;
    if (g > q) {
        throw ConfigError("image has " + std::to_string(g) + " instances but only " + std::to_string(q) +
                          " queries; increase decoder.num_queries");
    }
    MatchResult result;
    if (g == 0) {
        for (int64_t i = 0; i < q; ++i) {
            result.unmatched_queries.push_back(i);
        }
        return result;
    }
    auto points = torch::rand({cfg.num_points, 2}, generator, mask_logits.options().requires_grad(false));
    auto cost = matching_cost(class_logits, mask_logits, target, cfg, points);
    auto assign = linear_sum_assignment(cost.t());  // rows = gt, every gt assigned
    std::vector<char> taken(static_cast<size_t>(q), 0);
    for (int64_t j = 0; j < g; ++j) {
        const auto query = assign.row_to_col[static_cast<size_t>(j)];
        result.assignment.emplace_back(query, j);
        taken[static_cast<size_t>(query)] = 1;
    }
    std::sort(result.assignment.begin(), result.assignment.end());
    for (int64_t i = 0; i < q; ++i) {
        if (!taken[static_cast<size_t>(i)]) {
            result.unmatched_queries.push_back(i);
        }
    }
    return result;
}

}  // namespace mcsam
