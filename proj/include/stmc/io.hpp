#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "core.hpp"
#include "geometry.hpp"
#include "metrics.hpp"
#include "multicut.hpp"
#include "tracker.hpp"

namespace stmc {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sets the global log level from STMC_LOG (trace, debug, info, warn, error, off).
inline void init_logging_from_env() {
    spdlog::set_pattern("[%l] %v");
    if (const char* env = std::getenv("STMC_LOG")) {
        spdlog::set_level(spdlog::level::from_str(env));
    } else {
        spdlog::set_level(spdlog::level::warn);
    }
}

// ---------------------------------------------------------------------------
// Calibration: JSON array of {"camera_id": str, "homography": [9 numbers, row-major]}

inline std::vector<CameraCalibration> parse_calibrations(const nlohmann::json& j) {
    if (!j.is_array()) throw FormatError("calibration: expected a JSON array");
    std::vector<CameraCalibration> out;
    for (const auto& item : j) {
        const auto id = item.at("camera_id").get<std::string>();
        const auto h = item.at("homography").get<std::vector<double>>();
        if (h.size() != 9) throw FormatError("calibration '" + id + "': homography needs 9 numbers");
        std::array<double, 9> arr{};
        std::copy(h.begin(), h.end(), arr.begin());
        for (const auto& existing : out)
            if (existing.camera_id == id) throw FormatError("calibration: duplicate camera_id '" + id + "'");
        out.push_back(CameraCalibration::from_row_major(id, arr));
    }
    return out;
}

inline std::vector<CameraCalibration> read_calibrations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open calibration file '" + path.string() + "'");
    try {
        return parse_calibrations(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("calibration '" + path.string() + "': " + e.what());
    }
}

inline nlohmann::json calibrations_to_json(const std::vector<CameraCalibration>& cals) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cals) {
        const auto h = c.row_major();
        j.push_back({{"camera_id", c.camera_id}, {"homography", std::vector<double>(h.begin(), h.end())}});
    }
    return j;
}

inline void write_calibrations(const std::filesystem::path& path, const std::vector<CameraCalibration>& cals) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << calibrations_to_json(cals).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Detections: JSON Lines, one record per line.

struct DetectionRecord {
    std::string camera_id;
    int frame = 0;
    BBox bbox;
    double confidence = 1.0;
    std::vector<double> embedding;
};

inline std::string to_json_line(const DetectionRecord& r) {
    nlohmann::json j;
    j["camera_id"] = r.camera_id;
    j["frame"] = r.frame;
    j["bbox"] = {r.bbox.l, r.bbox.t, r.bbox.w, r.bbox.h};
    j["confidence"] = r.confidence;
    j["embedding"] = r.embedding;
    return j.dump();
}

inline DetectionRecord parse_detection_line(const std::string& line, long lineno) {
    try {
        const auto j = nlohmann::json::parse(line);
        DetectionRecord r;
        r.camera_id = j.at("camera_id").get<std::string>();
        r.frame = j.at("frame").get<int>();
        const auto b = j.at("bbox").get<std::vector<double>>();
        if (b.size() != 4) throw FormatError("bbox needs 4 numbers");
        r.bbox = {b[0], b[1], b[2], b[3]};
        if (!r.bbox.valid()) throw FormatError("bbox must have positive width and height");
        r.confidence = j.at("confidence").get<double>();
        if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) throw FormatError("confidence outside [0,1]");
        r.embedding = j.at("embedding").get<std::vector<double>>();
        if (r.embedding.empty()) throw FormatError("empty embedding");
        return r;
    } catch (const std::exception& e) {
        throw FormatError("detections line " + std::to_string(lineno) + ": " + e.what());
    }
}

struct FrameBatch {
    int frame = 0;
    std::vector<DetectionRecord> records;
};

/// Streams per-frame batches from a JSON-Lines file.
///
/// A first pass checks that frames are non-decreasing; if not, the whole file is loaded and
/// sorted (stable) with a warning. Otherwise only one batch is held at a time.
class DetectionReader {
public:
    DetectionReader(const std::filesystem::path& path, const std::vector<CameraCalibration>& cals) : path_(path) {
        for (std::size_t i = 0; i < cals.size(); ++i) camera_index_[cals[i].camera_id] = static_cast<int>(i);
        in_.open(path);
        if (!in_) throw std::runtime_error("cannot open detections file '" + path.string() + "'");
        sorted_ = check_sorted();
        in_.clear();
        in_.seekg(0);
        if (!sorted_) {
            spdlog::warn("detections in '{}' are not sorted by frame; sorting in memory", path.string());
            std::vector<DetectionRecord> all;
            while (auto r = next_record()) all.push_back(std::move(*r));
            std::stable_sort(all.begin(), all.end(),
                             [](const DetectionRecord& a, const DetectionRecord& b) { return a.frame < b.frame; });
            buffered_ = std::move(all);
        }
    }

    int camera_index(const std::string& id) const {
        const auto it = camera_index_.find(id);
        if (it == camera_index_.end()) throw FormatError("unknown camera_id '" + id + "'");
        return it->second;
    }

    std::optional<int> embedding_dim() const { return dim_; }

    std::optional<FrameBatch> next_batch() {
        if (!pending_) pending_ = next_record();
        if (!pending_) return std::nullopt;
        FrameBatch batch;
        batch.frame = pending_->frame;
        while (pending_ && pending_->frame == batch.frame) {
            batch.records.push_back(std::move(*pending_));
            pending_ = next_record();
        }
        return batch;
    }

private:
    bool check_sorted() {
        std::string line;
        std::optional<int> last;
        long lineno = 0;
        while (std::getline(in_, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto r = parse_detection_line(line, lineno);
            if (last && r.frame < *last) return false;
            last = r.frame;
        }
        return true;
    }

    std::optional<DetectionRecord> next_record() {
        if (loading_done_) {
            if (buffered_pos_ < buffered_.size()) return std::move(buffered_[buffered_pos_++]);
            return std::nullopt;
        }
        std::string line;
        while (std::getline(in_, line)) {
            ++lineno_;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto r = parse_detection_line(line, lineno_);
            camera_index(r.camera_id);
            if (!dim_) dim_ = static_cast<int>(r.embedding.size());
            if (static_cast<int>(r.embedding.size()) != *dim_)
                throw FormatError("detections line " + std::to_string(lineno_) + ": embedding dimension " +
                                  std::to_string(r.embedding.size()) + " differs from " + std::to_string(*dim_));
            return r;
        }
        if (!sorted_) loading_done_ = true;
        return std::nullopt;
    }

    std::filesystem::path path_;
    std::ifstream in_;
    std::map<std::string, int> camera_index_;
    std::optional<int> dim_;
    long lineno_ = 0;
    bool sorted_ = true;
    bool loading_done_ = false;
    std::vector<DetectionRecord> buffered_;
    std::size_t buffered_pos_ = 0;
    std::optional<DetectionRecord> pending_;
};

/// Converts a batch into tracker detections: dense camera index, unit embedding, ground point.
/// Detections whose reference pixel projects to infinity are dropped with a warning.
inline std::vector<Detection> to_detections(const FrameBatch& batch, const std::vector<CameraCalibration>& cals,
                                            const DetectionReader& reader, double alpha_proj) {
    std::vector<Detection> out;
    out.reserve(batch.records.size());
    for (const auto& r : batch.records) {
        Detection d;
        d.camera = reader.camera_index(r.camera_id);
        d.frame = r.frame;
        d.bbox = r.bbox;
        d.confidence = r.confidence;
        d.feat = Eigen::Map<const Eigen::VectorXd>(r.embedding.data(), static_cast<Eigen::Index>(r.embedding.size()));
        const double norm = d.feat.norm();
        if (norm == 0.0) {
            spdlog::warn("frame {} camera {}: zero embedding, detection dropped", r.frame, r.camera_id);
            continue;
        }
        if (std::abs(norm - 1.0) > 1e-3)
            spdlog::warn("frame {} camera {}: embedding norm {:.4f}, renormalized", r.frame, r.camera_id, norm);
        d.feat /= norm;
        try {
            d.pos_bev = project_to_ground(d.bbox, cals[static_cast<std::size_t>(d.camera)], alpha_proj);
        } catch (const DegenerateProjection&) {
            spdlog::warn("frame {} camera {}: box projects beyond the horizon, dropped", r.frame, r.camera_id);
            continue;
        }
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Track output: MOT-style CSV per camera, ground.txt, events.jsonl.

inline std::string mot_line(int frame, int id, const BBox& b, double conf, GroundPoint p) {
    return fmt::format("{},{},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},-1\n", frame, id, b.l, b.t, b.w, b.h,
                       conf, p.x, p.y);
}

inline std::string ground_line(int frame, int id, GroundPoint p) {
    return fmt::format("{},{},{:.3f},{:.3f}\n", frame, id, p.x, p.y);
}

class TrackWriter {
public:
    TrackWriter(const std::filesystem::path& dir, const std::vector<std::string>& camera_ids) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        for (const auto& id : camera_ids) cams_.push_back(open(dir / ("cam_" + id + ".txt")));
        ground_ = open(dir / "ground.txt");
        events_ = open(dir / "events.jsonl");
    }

    void write(const FrameResult& r) {
        for (const auto& b : r.boxes)
            cams_[static_cast<std::size_t>(b.camera)] << mot_line(r.frame, b.identity, b.box, b.confidence, b.pos_bev);
        for (const auto& g : r.ground) ground_ << ground_line(r.frame, g.identity, g.pos);
        auto event = [&](const char* kind, const nlohmann::json& value) {
            nlohmann::json j;
            j[kind] = value;
            j["frame"] = r.frame;
            events_ << j.dump() << '\n';
        };
        for (int id : r.born) event("born", id);
        for (const auto& m : r.merged) event("merged", nlohmann::json::array({m.retired, m.pivot}));
        for (int id : r.lost) event("lost", id);
        for (int id : r.killed) event("killed", id);
    }

    void flush() {
        for (auto& c : cams_) c.flush();
        ground_.flush();
        events_.flush();
    }

private:
    static std::ofstream open(const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
        return f;
    }

    std::vector<std::ofstream> cams_;
    std::ofstream ground_;
    std::ofstream events_;
};

/// Image and ground trajectories of one tracks (or ground-truth) directory.
struct TrackFiles {
    ImageTrajectories image;
    GroundTrajectories ground;
};

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

/// Camera ids found as `cam_<id>.txt` in a directory, sorted.
inline std::vector<std::string> camera_files(const std::filesystem::path& dir) {
    std::vector<std::string> ids;
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: '" + dir.string() + "'");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("cam_", 0) == 0 && entry.path().extension() == ".txt")
            ids.push_back(name.substr(4, name.size() - 8));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Reads `cam_<id>.txt` for every id in `camera_index` (missing files are empty) and ground.txt.
inline TrackFiles read_track_dir(const std::filesystem::path& dir, const std::map<std::string, int>& camera_index) {
    TrackFiles out;
    for (const auto& [id, index] : camera_index) {
        const auto path = dir / ("cam_" + id + ".txt");
        std::ifstream in(path);
        if (!in) continue;
        std::string line;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto cells = split_csv(line);
            if (cells.size() < 6) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": too few fields");
            try {
                out.image.add(std::stoi(cells[1]), std::stoi(cells[0]), index,
                              BBox{std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5])});
            } catch (const std::invalid_argument& e) {
                throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }
    std::ifstream in(dir / "ground.txt");
    std::vector<std::tuple<int, int, GroundPoint>> ground;
    std::string line;
    while (in && std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() < 4) throw FormatError((dir / "ground.txt").string() + ": too few fields");
        ground.emplace_back(std::stoi(cells[1]), std::stoi(cells[0]), GroundPoint{std::stod(cells[2]), std::stod(cells[3])});
    }
    out.ground = collapse_ground(ground);
    return out;
}

// ---------------------------------------------------------------------------
// Graph file for `solve`: first line "n m", then m lines "u v w".

inline WeightedGraph read_graph(std::istream& in) {
    int n = 0;
    long m = 0;
    if (!(in >> n >> m) || n < 0 || m < 0) throw FormatError("graph: first line must be 'n m'");
    WeightedGraph g(n);
    for (long i = 0; i < m; ++i) {
        int u = 0, v = 0;
        double w = 0.0;
        if (!(in >> u >> v >> w)) throw FormatError("graph: edge " + std::to_string(i + 1) + " is malformed");
        g.add_edge(u, v, w);
    }
    return g;
}

inline std::string format_labels(const Partition& p) {
    std::string out;
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(p.labels[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Drivers shared by the CLI and the tests.

struct TrackSummary {
    int frames = 0;
    long detections = 0;
    int identities = 0;
    long penalty_violations = 0;
};

/// Streams a detections file through the tracker and writes the tracks directory.
/// Frames without detections between the first and last batch are stepped empty.
inline TrackSummary track_files(const std::filesystem::path& detections, const std::filesystem::path& calibration,
                                const TrackerConfig& cfg, const std::filesystem::path& out_dir, int threads = 1) {
    const auto cals = read_calibrations(calibration);
    DetectionReader reader(detections, cals);
    std::vector<std::string> ids;
    for (const auto& c : cals) ids.push_back(c.camera_id);
    TrackWriter writer(out_dir, ids);
    TrackSummary summary;
    std::optional<Tracker> tracker;
    while (auto batch = reader.next_batch()) {
        if (!tracker) {
            tracker.emplace(cfg, static_cast<int>(cals.size()), batch->frame);
            tracker->set_threads(threads);
        }
        while (tracker->frame() < batch->frame) {
            writer.write(tracker->step({}));
            ++summary.frames;
        }
        const auto dets = to_detections(*batch, cals, reader, cfg.alpha_proj);
        const auto result = tracker->step(dets);
        summary.detections += static_cast<long>(dets.size());
        summary.penalty_violations += result.penalty_violations;
        writer.write(result);
        ++summary.frames;
    }
    writer.flush();
    if (tracker) summary.identities = tracker->next_identity() - 1;
    return summary;
}

struct SceneReport {
    std::string name;
    IdMetrics image;
    IdMetrics ground;
    MotaResult image_mota;
};

/// Scores a tracks directory against a ground-truth directory with the same camera files.
inline SceneReport evaluate_dirs(const std::filesystem::path& pred, const std::filesystem::path& gt, double iou_threshold,
                                 double radius) {
    std::map<std::string, int> index;
    for (const auto& id : camera_files(gt)) index.emplace(id, static_cast<int>(index.size()));
    for (const auto& id : camera_files(pred))
        if (!index.count(id)) throw FormatError("prediction has camera '" + id + "' missing from ground truth");
    const auto g = read_track_dir(gt, index);
    const auto p = read_track_dir(pred, index);
    SceneReport r;
    r.name = pred.filename().string();
    r.image = id_metrics(g.image, p.image, IouMatcher{iou_threshold});
    r.ground = id_metrics(g.ground, p.ground, RadiusMatcher{radius});
    r.image_mota = clear_mota(g.image, p.image, IouMatcher{iou_threshold});
    return r;
}

}  // namespace stmc
