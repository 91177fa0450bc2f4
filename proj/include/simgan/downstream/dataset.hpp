#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "simgan/core/digest.hpp"
#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/random.hpp"
#include "simgan/corpus/types.hpp"

namespace simgan::downstream {

struct LabeledSet {
    std::vector<Image> images;
    std::vector<int> labels;
    std::vector<std::string> class_names; ///< label index -> name

    [[nodiscard]] std::size_t size() const { return images.size(); }
    [[nodiscard]] bool empty() const { return images.empty(); }

    void add(Image img, int label)
    {
        images.push_back(std::move(img));
        labels.push_back(label);
    }

    [[nodiscard]] std::set<int> present_labels() const { return {labels.begin(), labels.end()}; }
};

inline std::string image_digest(const Image& img)
{
    Sha256 h;
    const int dims[2] = {img.height(), img.width()};
    h.update(dims, sizeof(dims));
    h.update(img.pixels());
    return h.hex();
}

/// Digest over images and labels in order.
inline std::string content_digest(const LabeledSet& s)
{
    Sha256 h;
    for (std::size_t i = 0; i < s.size(); ++i) {
        h.update(image_digest(s.images[i]));
        h.update(std::to_string(s.labels[i]));
    }
    return h.hex();
}

/// Throws ValidationError if any image of `a` also appears in `b` (by content hash).
inline void check_disjoint(const LabeledSet& a, const LabeledSet& b, const std::string& what)
{
    std::set<std::string> seen;
    for (const auto& img : a.images) {
        seen.insert(image_digest(img));
    }
    for (const auto& img : b.images) {
        if (seen.contains(image_digest(img))) {
            throw ValidationError(what + ": sets share at least one image");
        }
    }
}

/// Class names sorted lexicographically.
inline std::vector<std::string> class_names_of(const std::vector<corpus::Patch>& patches)
{
    std::set<std::string> names;
    for (const auto& p : patches) {
        names.insert(p.class_label);
    }
    return {names.begin(), names.end()};
}

inline LabeledSet labeled_from_patches(const std::vector<corpus::Patch>& patches,
                                       const std::vector<std::string>& class_names)
{
    LabeledSet s;
    s.class_names = class_names;
    for (const auto& p : patches) {
        const auto it = std::find(class_names.begin(), class_names.end(), p.class_label);
        if (it == class_names.end()) {
            throw InvalidInput("labeled_from_patches: unknown class '" + p.class_label + "'");
        }
        s.add(p.pixels, static_cast<int>(it - class_names.begin()));
    }
    return s;
}

/// Per-class split by source slide: about `train_fraction` of each class's
/// slides go to the first set, the rest to the second, at least one each
/// when a class has two or more slides.
inline std::pair<std::vector<corpus::Patch>, std::vector<corpus::Patch>>
split_by_slide(const std::vector<corpus::Patch>& patches, double train_fraction, std::uint64_t seed)
{
    std::map<std::string, std::vector<std::string>> slides;
    for (const auto& p : patches) {
        auto& v = slides[p.class_label];
        if (std::find(v.begin(), v.end(), p.source_slide) == v.end()) {
            v.push_back(p.source_slide);
        }
    }
    std::set<std::string> train_slides;
    for (auto& [cls, ids] : slides) {
        std::sort(ids.begin(), ids.end());
        Rng rng = make_rng(seed, "split-" + cls);
        std::shuffle(ids.begin(), ids.end(), rng);
        int n_train = static_cast<int>(std::lround(train_fraction * static_cast<double>(ids.size())));
        if (ids.size() >= 2) {
            n_train = std::clamp(n_train, 1, static_cast<int>(ids.size()) - 1);
        }
        for (int i = 0; i < n_train; ++i) {
            train_slides.insert(ids[static_cast<std::size_t>(i)]);
        }
    }
    std::pair<std::vector<corpus::Patch>, std::vector<corpus::Patch>> out;
    for (const auto& p : patches) {
        (train_slides.contains(p.source_slide) ? out.first : out.second).push_back(p);
    }
    return out;
}

} // namespace simgan::downstream
