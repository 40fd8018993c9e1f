#pragma once

#include "relcap/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace relcap {

/// Axis-aligned box: center (cx, cy) plus width/height, in image-normalized
/// units after ingestion.
template <class S>
struct BoundingBox {
    S cx = 0, cy = 0, width = 0, height = 0;

    void validate() const {
        if (!(width > S(0)) || !(height > S(0)))
            throw ValidationError("degenerate box: width=" + std::to_string(double(width)) +
                                  " height=" + std::to_string(double(height)));
    }

    S left() const { return cx - width / S(2); }
    S right() const { return cx + width / S(2); }
    S top() const { return cy - height / S(2); }
    S bottom() const { return cy + height / S(2); }
    S area() const { return width * height; }
};

template <class S>
S iou(const BoundingBox<S>& a, const BoundingBox<S>& b) {
    const S iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    const S ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (iw <= S(0) || ih <= S(0)) return S(0);
    const S inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

/// Smallest axis-aligned box covering both.
template <class S>
BoundingBox<S> union_box(const BoundingBox<S>& a, const BoundingBox<S>& b) {
    const S l = std::min(a.left(), b.left());
    const S r = std::max(a.right(), b.right());
    const S t = std::min(a.top(), b.top());
    const S bo = std::max(a.bottom(), b.bottom());
    return BoundingBox<S>{(l + r) / S(2), (t + bo) / S(2), r - l, bo - t};
}

/// Pairwise spatial descriptor of an ordered box pair: scale-normalized
/// translation, size ratio, overlap, and both aspect ratios. Invariant
/// under joint translation and uniform scaling; not symmetric under
/// argument swap except the overlap term.
template <class S>
using SpatialFeature = std::array<S, 6>;

template <class S>
SpatialFeature<S> spatial_feature(const BoundingBox<S>& a, const BoundingBox<S>& b) {
    a.validate();
    b.validate();
    const S norm = std::sqrt(a.width * a.height);
    return SpatialFeature<S>{(b.cx - a.cx) / norm,
                             (b.cy - a.cy) / norm,
                             std::sqrt((b.width * b.height) / (a.width * a.height)),
                             iou(a, b),
                             a.width / a.height,
                             b.width / b.height};
}

} // namespace relcap
