#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "http.hpp"
#include "index.hpp"
#include "text.hpp"

namespace snt {

/// Box in image-normalized coordinates; (x, y) is the top-left corner.
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    static constexpr BoundingBox full() { return {0.0, 0.0, 1.0, 1.0}; }
    double area() const noexcept { return w * h; }

    bool valid() const noexcept {
        constexpr double eps = 1e-9;
        auto finite = std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h);
        return finite && x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0 && x + w <= 1.0 + eps &&
               y + h <= 1.0 + eps;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ImageRef {
    std::string image_id;
    std::string uri;
    int width = 0;
    int height = 0;
    std::optional<BoundingBox> region; // set on crops, relative to the source image
};

struct RegionProposal {
    BoundingBox box;
    std::string label;
    double confidence = 0.0;

    bool valid() const noexcept {
        return box.valid() && std::isfinite(confidence) && confidence >= 0.0 && confidence <= 1.0;
    }
};

inline void to_json(nlohmann::json& j, const BoundingBox& b) {
    j = {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

inline void to_json(nlohmann::json& j, const RegionProposal& p) {
    j = {{"x", p.box.x}, {"y", p.box.y},   {"w", p.box.w},
         {"h", p.box.h}, {"label", p.label}, {"confidence", p.confidence}};
}

inline void from_json(const nlohmann::json& j, RegionProposal& p) {
    p.box = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
             j.at("h").get<double>()};
    p.label = j.value("label", "");
    p.confidence = j.at("confidence").get<double>();
}

class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    virtual std::vector<RegionProposal> detect(const ImageRef& image, const std::string& query) = 0;
    /// Backends that cannot take concurrent calls return false; the pipeline
    /// then serializes access.
    virtual bool concurrent_safe() const { return true; }
};

/// Table of image_id -> proposals, loaded from JSONL
/// `{"image_id": ..., "proposals": [{x,y,w,h,label,confidence}, ...]}`.
class FixtureDetector final : public DetectorBackend {
public:
    FixtureDetector() = default;

    static FixtureDetector from_jsonl(const std::filesystem::path& path) {
        FixtureDetector d;
        for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
            d.table_[j.at("image_id").get<std::string>()] = j.at("proposals");
        });
        return d;
    }

    void set(const std::string& image_id, const std::vector<RegionProposal>& proposals) {
        table_[image_id] = proposals;
    }

    std::vector<RegionProposal> detect(const ImageRef& image, const std::string&) override {
        auto it = table_.find(image.image_id);
        if (it == table_.end()) return {};
        try {
            return it->second.get<std::vector<RegionProposal>>();
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::BackendMalformedResponse, ex.what());
        }
    }

private:
    std::map<std::string, nlohmann::json> table_;
};

/// POST {base}/detect {image_uri, query} -> {proposals: [...]}.
class HttpDetector final : public DetectorBackend {
public:
    explicit HttpDetector(const std::string& base_url,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10))
        : endpoint_(http::parse_endpoint(base_url)), timeout_(timeout) {}

    std::vector<RegionProposal> detect(const ImageRef& image, const std::string& query) override {
        auto res = http::post_json(endpoint_, "/detect",
                                   {{"image_uri", image.uri}, {"query", query}}, timeout_);
        if (res.failure == http::Failure::Unavailable || res.failure == http::Failure::Timeout ||
            res.failure == http::Failure::BadStatus)
            throw Error(ErrorKind::BackendUnavailable, "detector: " + res.detail);
        if (res.failure == http::Failure::BadBody)
            throw Error(ErrorKind::BackendMalformedResponse, "detector: " + res.detail);
        try {
            return res.body.at("proposals").get<std::vector<RegionProposal>>();
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::BackendMalformedResponse, std::string("detector: ") + ex.what());
        }
    }

private:
    http::Endpoint endpoint_;
    std::chrono::milliseconds timeout_;
};

/// Detector query derived from the question: its non-stopword tokens.
inline std::string detection_query(std::string_view question) {
    auto toks = text::content_tokens(question);
    if (toks.empty()) return "object";
    return text::join(toks);
}

/// Confidence descending; ties by larger area, then top-most, then left-most.
inline bool proposal_before(const RegionProposal& a, const RegionProposal& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    return a.box.x < b.box.x;
}

inline std::vector<RegionProposal> detect_regions(const ImageRef& image, const std::string& query,
                                                  DetectorBackend& backend) {
    if (query.empty()) throw Error(ErrorKind::InvalidArgument, "detection query is empty");
    auto proposals = backend.detect(image, query);
    for (const auto& p : proposals) {
        if (!p.valid())
            throw Error(ErrorKind::BackendMalformedResponse,
                        "proposal violates box/confidence invariants (confidence " +
                            std::to_string(p.confidence) + ")");
    }
    std::stable_sort(proposals.begin(), proposals.end(), proposal_before);
    return proposals;
}

/// Highest-confidence proposal at or above the threshold, else the full image.
inline BoundingBox select_primary_region(std::span<const RegionProposal> proposals,
                                         double min_confidence = 0.3) {
    const RegionProposal* best = nullptr;
    for (const auto& p : proposals) {
        if (p.confidence < min_confidence) continue;
        if (!best || proposal_before(p, *best)) best = &p;
    }
    return best ? best->box : BoundingBox::full();
}

inline ImageRef crop(const ImageRef& image, const BoundingBox& box) {
    if (image.width <= 0 || image.height <= 0)
        throw Error(ErrorKind::ImageLoadFailure, "image " + image.image_id + " has no pixel size");
    if (!box.valid()) throw Error(ErrorKind::InvalidArgument, "invalid bounding box");
    auto scaled = [](double frac, int px) {
        return std::max(1, static_cast<int>(std::lround(frac * px)));
    };
    ImageRef out = image;
    out.width = scaled(box.w, image.width);
    out.height = scaled(box.h, image.height);
    if (image.region) {
        const auto& r = *image.region;
        out.region = BoundingBox{r.x + box.x * r.w, r.y + box.y * r.h, box.w * r.w, box.h * r.h};
    } else {
        out.region = box;
    }
    return out;
}

} // namespace snt
