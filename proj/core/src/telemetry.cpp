#include "attnscope/telemetry.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attnscope/error.hpp"

namespace attnscope::telemetry {

using nlohmann::json;

const char* to_string(Expertise e) {
    switch (e) {
        case Expertise::resident: return "resident";
        case Expertise::general: return "general";
        case Expertise::specialist: return "specialist";
    }
    return "?";
}

Expertise expertise_from_string(std::string_view s) {
    if (s == "resident") return Expertise::resident;
    if (s == "general") return Expertise::general;
    if (s == "specialist") return Expertise::specialist;
    throw DataError("MalformedRecord", "unknown expertise '" + std::string(s) + "'");
}

static void check_sample(const ViewportSample& v, std::size_t idx) {
    auto bad = [&](const std::string& why) {
        throw DataError("BadCoordinate", "sample " + std::to_string(idx) + ": " + why);
    };
    if (!(std::isfinite(v.x0) && std::isfinite(v.y0) && std::isfinite(v.x1) && std::isfinite(v.y1)))
        bad("non-finite bbox");
    if (v.x0 < 0 || v.y0 < 0 || v.x1 > 1 || v.y1 > 1) bad("bbox outside [0,1]");
    if (!(v.x0 < v.x1) || !(v.y0 < v.y1)) bad("inverted bbox");
    if (v.t_ms < 0)
        throw DataError("MalformedRecord", "sample " + std::to_string(idx) + ": negative t_ms");
    if (!(v.mag > 0) || !std::isfinite(v.mag))
        throw DataError("MalformedRecord", "sample " + std::to_string(idx) + ": mag must be > 0");
}

void check_session(const Session& s) {
    // duration > 0 together with strict monotonicity means >= 2 samples;
    // EmptySession covers both the zero- and one-sample case.
    if (s.samples.size() < 2)
        throw DataError("EmptySession", "session '" + s.session_id + "' has " +
                                            std::to_string(s.samples.size()) +
                                            " sample(s), need at least 2");
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        check_sample(s.samples[i], i);
        if (i > 0 && s.samples[i].t_ms <= s.samples[i - 1].t_ms)
            throw DataError("NonMonotonicTime",
                            "t_ms not strictly increasing at sample " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// JSONL session logs

static json parse_json_line(const std::string& line, std::size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError("MalformedRecord", "line " + std::to_string(lineno) + ": not a JSON object");
    return j;
}

template <class T>
static T require_field(const json& j, const char* key, std::size_t lineno) {
    auto it = j.find(key);
    if (it == j.end())
        throw DataError("MalformedRecord",
                        "line " + std::to_string(lineno) + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw DataError("MalformedRecord",
                        "line " + std::to_string(lineno) + ": field '" + key + "' has wrong type");
    }
}

Session parse_session_log(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    std::string line;
    Session s;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json j = parse_json_line(line, lineno);
        std::string type = require_field<std::string>(j, "type", lineno);
        if (type == "header") {
            if (have_header)
                throw DataError("MalformedRecord",
                                "line " + std::to_string(lineno) + ": duplicate header");
            have_header = true;
            s.session_id = require_field<std::string>(j, "session_id", lineno);
            s.pathologist_id = require_field<std::string>(j, "pathologist_id", lineno);
            s.wsi_id = require_field<std::string>(j, "wsi_id", lineno);
            s.expertise = expertise_from_string(require_field<std::string>(j, "expertise", lineno));
            auto pg = j.find("primary_grade");
            auto sg = j.find("secondary_grade");
            if (pg == j.end() || sg == j.end())
                throw DataError("MalformedRecord",
                                "line " + std::to_string(lineno) + ": missing grade fields");
            if (!pg->is_null() && !sg->is_null()) {
                GradePair g;
                g.primary = require_field<int>(j, "primary_grade", lineno);
                g.secondary = require_field<int>(j, "secondary_grade", lineno);
                auto conf = j.find("confidence");
                if (conf != j.end() && !conf->is_null()) {
                    double c = require_field<double>(j, "confidence", lineno);
                    if (!(c >= 0.0 && c <= 1.0))
                        throw DataError("MalformedRecord", "line " + std::to_string(lineno) +
                                                               ": confidence outside [0,1]");
                    g.confidence = c;
                }
                s.grade = g;
            }
        } else if (type == "sample") {
            if (!have_header)
                throw DataError("MalformedRecord",
                                "line " + std::to_string(lineno) + ": sample before header");
            ViewportSample v;
            v.t_ms = require_field<std::int64_t>(j, "t_ms", lineno);
            v.x0 = require_field<double>(j, "x0", lineno);
            v.y0 = require_field<double>(j, "y0", lineno);
            v.x1 = require_field<double>(j, "x1", lineno);
            v.y1 = require_field<double>(j, "y1", lineno);
            v.mag = require_field<double>(j, "mag", lineno);
            s.samples.push_back(v);
        } else {
            throw DataError("MalformedRecord",
                            "line " + std::to_string(lineno) + ": unknown record type '" + type + "'");
        }
    }
    if (!have_header) throw DataError("MalformedRecord", "missing header line");
    check_session(s);
    return s;
}

std::string write_session_log(const Session& s) {
    std::string out;
    json h;
    h["type"] = "header";
    h["session_id"] = s.session_id;
    h["pathologist_id"] = s.pathologist_id;
    h["wsi_id"] = s.wsi_id;
    h["expertise"] = to_string(s.expertise);
    if (s.grade) {
        h["primary_grade"] = s.grade->primary;
        h["secondary_grade"] = s.grade->secondary;
        if (s.grade->confidence)
            h["confidence"] = *s.grade->confidence;
        else
            h["confidence"] = nullptr;
    } else {
        h["primary_grade"] = nullptr;
        h["secondary_grade"] = nullptr;
        h["confidence"] = nullptr;
    }
    out += h.dump();
    out += '\n';
    for (const auto& v : s.samples) {
        json j;
        j["type"] = "sample";
        j["t_ms"] = v.t_ms;
        j["x0"] = v.x0;
        j["y0"] = v.y0;
        j["x1"] = v.x1;
        j["y1"] = v.y1;
        j["mag"] = v.mag;
        out += j.dump();
        out += '\n';
    }
    return out;
}

Session read_session_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw DataError("IoError", "cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_session_log(ss.str());
}

void write_session_file(const std::filesystem::path& p, const Session& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("IoError", "cannot write " + p.string());
    f << write_session_log(s);
}

// ---------------------------------------------------------------------------
// ATNT binary tensors

namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint64_t kMaxElements = 1ULL << 30;

std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

}  // namespace

TensorFile read_atnt(std::string_view bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4 || std::memcmp(p, kMagic, 4) != 0)
        throw DataError("BadMagic", "not an ATNT file");
    if (bytes.size() < 10) throw DataError("Truncated", "truncated header");
    std::uint32_t version = read_u32le(p + 4);
    if (version != kVersion)
        throw DataError("UnsupportedVersion", "version " + std::to_string(version));
    std::uint8_t dtype = p[8];
    if (dtype != kDtypeF32)
        throw DataError("UnsupportedVersion", "dtype " + std::to_string(dtype));
    std::uint8_t ndim = p[9];
    std::size_t off = 10;
    if (bytes.size() < off + 4u * ndim) throw DataError("Truncated", "truncated dims");
    TensorFile t;
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        std::uint32_t d = read_u32le(p + off);
        off += 4;
        if (d == 0) throw DataError("DimMismatch", "zero dimension");
        count *= d;
        if (count > kMaxElements) throw DataError("DimMismatch", "tensor too large");
        t.dims.push_back(d);
    }
    std::size_t payload = bytes.size() - off;
    if (payload != count * 4)
        throw DataError("DimMismatch", "declared " + std::to_string(count * 4) +
                                           " payload bytes, file has " + std::to_string(payload));
    t.data.resize(count);
    std::memcpy(t.data.data(), p + off, payload);
    for (float v : t.data)
        if (!std::isfinite(v)) throw DataError("NonFiniteValue", "payload contains NaN/Inf");
    return t;
}

std::string write_atnt(const TensorFile& t) {
    std::uint64_t count = 1;
    for (std::uint32_t d : t.dims) count *= d;
    if (count != t.data.size())
        throw DataError("DimMismatch", "dims/product disagree with payload length");
    std::string out;
    out.reserve(10 + 4 * t.dims.size() + 4 * t.data.size());
    out.append(kMagic, 4);
    append_u32le(out, kVersion);
    out.push_back(static_cast<char>(kDtypeF32));
    out.push_back(static_cast<char>(t.dims.size()));
    for (std::uint32_t d : t.dims) append_u32le(out, d);
    std::size_t off = out.size();
    out.resize(off + 4 * t.data.size());
    std::memcpy(out.data() + off, t.data.data(), 4 * t.data.size());
    return out;
}

TensorFile read_atnt_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw DataError("IoError", "cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return read_atnt(ss.str());
}

void write_atnt_file(const std::filesystem::path& p, const TensorFile& t) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("IoError", "cannot write " + p.string());
    const std::string bytes = write_atnt(t);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FeatureGrid feature_grid_from_atnt(const TensorFile& t) {
    if (t.dims.size() != 3)
        throw DataError("DimMismatch",
                        "feature grid needs 3 dims, got " + std::to_string(t.dims.size()));
    FeatureGrid g;
    g.grid_h = static_cast<int>(t.dims[0]);
    g.grid_w = static_cast<int>(t.dims[1]);
    g.dim = static_cast<int>(t.dims[2]);
    g.data.assign(t.data.begin(), t.data.end());
    return g;
}

TensorFile to_atnt(const FeatureGrid& g) {
    TensorFile t;
    t.dims = {static_cast<std::uint32_t>(g.grid_h), static_cast<std::uint32_t>(g.grid_w),
              static_cast<std::uint32_t>(g.dim)};
    t.data.assign(g.data.begin(), g.data.end());
    return t;
}

// ---------------------------------------------------------------------------

CohortSummary validate_cohort(const std::vector<Session>& sessions) {
    CohortSummary sum;
    sum.n_sessions = sessions.size();
    std::map<Expertise, std::set<std::string>> readers_by_exp;
    std::map<std::string, std::set<std::string>> readers_by_wsi;
    std::map<std::pair<std::string, Expertise>, std::set<std::string>> readers_by_wsi_exp;
    double total_ms = 0.0;
    for (const auto& s : sessions) {
        sum.sessions_per_expertise[s.expertise] += 1;
        sum.sessions_per_wsi[s.wsi_id] += 1;
        readers_by_exp[s.expertise].insert(s.pathologist_id);
        readers_by_wsi[s.wsi_id].insert(s.pathologist_id);
        readers_by_wsi_exp[{s.wsi_id, s.expertise}].insert(s.pathologist_id);
        total_ms += static_cast<double>(s.duration_ms());
    }
    for (const auto& [e, ids] : readers_by_exp) sum.readers_per_expertise[e] = ids.size();
    for (const auto& [w, ids] : readers_by_wsi) sum.readers_per_wsi[w] = ids.size();
    for (const auto& [key, ids] : readers_by_wsi_exp)
        if (ids.size() < 2) sum.underpowered.push_back(key);
    if (!sessions.empty()) sum.mean_duration_ms = total_ms / static_cast<double>(sessions.size());
    return sum;
}

}  // namespace attnscope::telemetry
