#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wsipipe/common.hpp"
#include "wsipipe/manifest.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe {

struct SlideSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;

    bool is_test(const std::string& id) const {
        return std::find(test_ids.begin(), test_ids.end(), id) != test_ids.end();
    }
};

// Slide-level partition: seeded uniform shuffle of the slide ids, then a
// prefix/suffix cut. Keeping whole slides on one side makes patch-level
// leakage impossible by construction.
inline SlideSplit split_by_slide(const DatasetManifest& manifest, double test_fraction,
                                 std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ValidationError("test fraction must be in (0, 1), got " + std::to_string(test_fraction));
    const std::size_t n = manifest.slides.size();
    if (n == 0) throw ValidationError("empty manifest");
    if (n == 1) throw ValidationError("cannot split a single slide into train and test");

    std::vector<std::string> ids;
    ids.reserve(n);
    for (const ManifestEntry& e : manifest.slides) ids.push_back(e.slide_id);
    Rng rng(seed);
    rng.shuffle(ids);

    std::size_t test_count = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    test_count = std::max<std::size_t>(1, std::min(test_count, n - 1));

    SlideSplit split;
    split.test_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_count));
    split.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(test_count), ids.end());
    std::sort(split.test_ids.begin(), split.test_ids.end());
    std::sort(split.train_ids.begin(), split.train_ids.end());
    return split;
}

} // namespace wsipipe
