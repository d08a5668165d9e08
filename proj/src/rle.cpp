#include "mcsam/rle.hpp"

#include "mcsam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace mcsam {

int64_t BinaryMask::area() const {
    int64_t n = 0;
    for (auto v : data) {
        n += v != 0;
    }
    return n;
}

Rle rle_encode(const BinaryMask& mask) {
    Rle r{mask.height, mask.width, {}};
    uint8_t prev = 0;
    uint32_t run = 0;
    for (int64_t x = 0; x < mask.width; ++x) {
        for (int64_t y = 0; y < mask.height; ++y) {
            const uint8_t v = mask.at(y, x) ? 1 : 0;
            if (v != prev) {
                r.counts.push_back(run);
                run = 0;
                prev = v;
            }
            ++run;
        }
    }
    r.counts.push_back(run);
    return r;
}

BinaryMask rle_decode(const Rle& rle) {
    BinaryMask m(rle.height, rle.width);
    int64_t pos = 0;
    uint8_t v = 0;
    const int64_t total = rle.height * rle.width;
    for (auto c : rle.counts) {
        for (uint32_t k = 0; k < c && pos < total; ++k, ++pos) {
            if (v) {
                const auto y = pos % rle.height;
                const auto x = pos / rle.height;
                m.at(y, x) = 1;
            }
        }
        v = !v;
    }
    return m;
}

int64_t rle_area(const Rle& rle) {
    int64_t a = 0;
    for (size_t i = 1; i < rle.counts.size(); i += 2) {
        a += rle.counts[i];
    }
    return a;
}

Box rle_to_bbox(const Rle& rle) {
    const auto h = static_cast<uint32_t>(rle.height);
    const auto w = static_cast<uint32_t>(rle.width);
    const size_t m = (rle.counts.size() / 2) * 2;
    if (m == 0) {
        return {0, 0, 0, 0};
    }
    uint32_t xs = w, ys = h, xe = 0, ye = 0, cc = 0, xp = 0;
    for (size_t j = 0; j < m; ++j) {
        cc += rle.counts[j];
        const uint32_t t = cc - static_cast<uint32_t>(j % 2);
        const uint32_t y = t % h;
        const uint32_t x = (t - y) / h;
        if (j % 2 == 0) {
            xp = x;
        } else if (xp < x) {
            ys = 0;
            ye = h - 1;
        }
        xs = std::min(xs, x);
        xe = std::max(xe, x);
        ys = std::min(ys, y);
        ye = std::max(ye, y);
    }
    return {static_cast<double>(xs), static_cast<double>(ys), static_cast<double>(xe - xs + 1),
            static_cast<double>(ye - ys + 1)};
}

std::string rle_to_string(const Rle& rle) {
    std::string s;
    for (size_t i = 0; i < rle.counts.size(); ++i) {
        long x = static_cast<long>(rle.counts[i]);
        if (i > 2) {
            x -= static_cast<long>(rle.counts[i - 2]);
        }
        bool more = true;
        while (more) {
            char c = static_cast<char>(x & 0x1f);
            x >>= 5;
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more) {
                c |= 0x20;
            }
            s.push_back(static_cast<char>(c + 48));
        }
    }
    return s;
}

Rle rle_from_string(const std::string& s, int64_t height, int64_t width) {
    Rle r{height, width, {}};
    size_t p = 0;
    while (p < s.size()) {
        long x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= s.size()) {
                throw DataError("truncated compressed RLE string");
            }
            const long c = static_cast<long>(s[p]) - 48;
            x |= (c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10)) {
                x |= -1L << (5 * k);
            }
        }
        if (r.counts.size() > 2) {
            x += static_cast<long>(r.counts[r.counts.size() - 2]);
        }
        r.counts.push_back(static_cast<uint32_t>(x));
    }
    return r;
}

Rle rle_from_polygon(const std::vector<double>& xy, int64_t height, int64_t width) {
    const size_t k = xy.size() / 2;
    const double scale = 5.0;
    const auto h = static_cast<uint32_t>(height);
    const auto w = static_cast<uint32_t>(width);
    std::vector<int> x(k + 1), y(k + 1);
    for (size_t j = 0; j < k; ++j) {
        x[j] = static_cast<int>(scale * xy[2 * j] + 0.5);
        y[j] = static_cast<int>(scale * xy[2 * j + 1] + 0.5);
    }
    x[k] = x[0];
    y[k] = y[0];

    // Dense boundary points on the upsampled grid.
    std::vector<int> u, v;
    for (size_t j = 0; j < k; ++j) {
        int xs = x[j], xe = x[j + 1], ys = y[j], ye = y[j + 1];
        const int dx = std::abs(xe - xs);
        const int dy = std::abs(ys - ye);
        const bool flip = (dx >= dy && xs > xe) || (dx < dy && ys > ye);
        if (flip) {
            std::swap(xs, xe);
            std::swap(ys, ye);
        }
        const double s = dx >= dy ? static_cast<double>(ye - ys) / dx : static_cast<double>(xe - xs) / dy;
        if (dx >= dy) {
            for (int d = 0; d <= dx; ++d) {
                const int t = flip ? dx - d : d;
                u.push_back(t + xs);
                v.push_back(static_cast<int>(ys + s * t + 0.5));
            }
        } else {
            for (int d = 0; d <= dy; ++d) {
                const int t = flip ? dy - d : d;
                v.push_back(t + ys);
                u.push_back(static_cast<int>(xs + s * t + 0.5));
            }
        }
    }

    // Points where the boundary crosses a pixel column, downsampled.
    std::vector<uint32_t> a;
    for (size_t j = 1; j < u.size(); ++j) {
        if (u[j] == u[j - 1]) {
            continue;
        }
        double xd = static_cast<double>(u[j] < u[j - 1] ? u[j] : u[j] - 1);
        xd = (xd + 0.5) / scale - 0.5;
        if (std::floor(xd) != xd || xd < 0 || xd > static_cast<double>(w) - 1) {
            continue;
        }
        double yd = static_cast<double>(v[j] < v[j - 1] ? v[j] : v[j - 1]);
        yd = (yd + 0.5) / scale - 0.5;
        if (yd < 0) {
            yd = 0;
        } else if (yd > h) {
            yd = h;
        }
        yd = std::ceil(yd);
        a.push_back(static_cast<uint32_t>(static_cast<int>(xd) * static_cast<int>(h) + static_cast<int>(yd)));
    }
    a.push_back(h * w);
    std::sort(a.begin(), a.end());
    uint32_t prev = 0;
    for (auto& t : a) {
        const uint32_t cur = t;
        t -= prev;
        prev = cur;
    }
    Rle r{height, width, {}};
    size_t j = 0;
    r.counts.push_back(a[j++]);
    while (j < a.size()) {
        if (a[j] > 0) {
            r.counts.push_back(a[j++]);
        } else {
            ++j;
            if (j < a.size()) {
                r.counts.back() += a[j++];
            }
        }
    }
    return r;
}

Rle rle_merge(const std::vector<Rle>& rles, bool intersect) {
    if (rles.empty()) {
        return {};
    }
    Rle acc = rles.front();
    for (size_t i = 1; i < rles.size(); ++i) {
        const Rle& B = rles[i];
        if (B.height != acc.height || B.width != acc.width) {
            throw ShapeError("cannot merge RLEs of different sizes");
        }
        const Rle A = acc;
        acc.counts.clear();
        if (A.counts.empty() || B.counts.empty()) {
            continue;
        }
        uint32_t ca = A.counts[0], cb = B.counts[0], cc = 0, ct = 1;
        bool v = false, va = false, vb = false;
        size_t a = 1, b = 1;
        while (ct > 0) {
            const uint32_t c = std::min(ca, cb);
            cc += c;
            ct = 0;
            ca -= c;
            if (!ca && a < A.counts.size()) {
                ca = A.counts[a++];
                va = !va;
            }
            ct += ca;
            cb -= c;
            if (!cb && b < B.counts.size()) {
                cb = B.counts[b++];
                vb = !vb;
            }
            ct += cb;
            const bool vp = v;
            v = intersect ? (va && vb) : (va || vb);
            if (v != vp || ct == 0) {
                acc.counts.push_back(cc);
                cc = 0;
            }
        }
    }
    return acc;
}

double rle_iou(const Rle& dt, const Rle& gt, bool gt_crowd) {
    if (dt.height != gt.height || dt.width != gt.width) {
        throw ShapeError("IoU between masks of different sizes");
    }
    const auto inter = static_cast<double>(rle_area(rle_merge({dt, gt}, true)));
    const auto a_dt = static_cast<double>(rle_area(dt));
    const double uni = gt_crowd ? a_dt : a_dt + static_cast<double>(rle_area(gt)) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

double box_iou(const Box& dt, const Box& gt, bool gt_crowd) {
    const double w = std::min(dt[0] + dt[2], gt[0] + gt[2]) - std::max(dt[0], gt[0]);
    const double h = std::min(dt[1] + dt[3], gt[1] + gt[3]) - std::max(dt[1], gt[1]);
    if (w <= 0 || h <= 0) {
        return 0.0;
    }
    const double inter = w * h;
    const double a_dt = dt[2] * dt[3];
    const double uni = gt_crowd ? a_dt : a_dt + gt[2] * gt[3] - inter;
    return uni > 0 ? inter / uni : 0.0;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("mask_iou: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
    }
    int64_t inter = 0;
    int64_t uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const bool x = a.data[i] != 0;
        const bool y = b.data[i] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Box mask_bbox(const BinaryMask& mask) {
    int64_t x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int64_t y = 0; y < mask.height; ++y) {
        for (int64_t x = 0; x < mask.width; ++x) {
            if (mask.at(y, x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        return {0, 0, 0, 0};
    }
    return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
            static_cast<double>(y1 - y0 + 1)};
}

}  // namespace mcsam
