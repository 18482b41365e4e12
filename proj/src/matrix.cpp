#include "latlens/matrix.hpp"

#include <algorithm>
#include <numeric>

namespace latlens {

double dot_f64(std::span<const float> a, std::span<const float> b) {
    check_contract(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

std::vector<float> matvec(const Matrix& m, std::span<const float> v) {
    check_contract(v.size() == m.cols, "matvec: vector length != matrix cols");
    std::vector<float> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        out[i] = static_cast<float>(dot_f64(m.row(i), v));
    }
    return out;
}

std::vector<std::size_t> topk_indices(std::span<const float> v, std::size_t k) {
    check_contract(k >= 1 && k <= v.size(), "topk: k out of range");
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     idx.end(), better);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace latlens
