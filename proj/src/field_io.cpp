#include <fstream>

#include <json.hpp>

#include "mfglab/grid.hpp"

namespace mfg {

namespace {

using nlohmann::json;

json header_json(const std::string& kind, const TorusGrid& g, int levels) {
    json h;
    h["format"] = "mfglab-field-v1";
    h["kind"] = kind;
    h["d"] = g.d;
    h["N"] = g.N;
    h["T"] = g.T;
    h["Nt"] = g.Nt;
    h["levels"] = levels;
    h["dtype"] = "complex128";
    h["layout"] = "time-major,row-major,interleaved";
    return h;
}

void write_payload(std::ofstream& out, const std::vector<cplx>& v) {
    static_assert(sizeof(cplx) == 2 * sizeof(double));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(cplx)));
}

void read_payload(std::ifstream& in, std::vector<cplx>& v, const std::string& path) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(cplx)));
    if (static_cast<size_t>(in.gcount()) != v.size() * sizeof(cplx))
        throw ConfigError("field file truncated: " + path);
}

struct Header {
    std::string kind;
    TorusGrid grid;
    int levels = 0;
};

Header read_header(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("field file missing header: " + path);
    json h;
    try {
        h = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ConfigError("field file has malformed header: " + path + ": " + e.what());
    }
    if (h.value("format", "") != "mfglab-field-v1")
        throw ConfigError("field file has unknown format tag: " + path);
    if (h.value("dtype", "") != "complex128")
        throw ConfigError("field file has unsupported dtype: " + path);
    Header out;
    try {
        out.kind = h.at("kind").get<std::string>();
        out.grid.d = h.at("d").get<int>();
        out.grid.N = h.at("N").get<int>();
        out.grid.T = h.at("T").get<double>();
        out.grid.Nt = h.at("Nt").get<int>();
        out.levels = h.at("levels").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError("field file header incomplete: " + path + ": " + e.what());
    }
    out.grid.validate();
    if (out.levels < 1) throw ConfigError("field file has bad level count: " + path);
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open for reading: " + path);
    return in;
}

}  // namespace

void write_field(const std::string& path, const std::string& kind, const SpaceTimeField& f) {
    std::ofstream out = open_out(path);
    out << header_json(kind, f.grid, f.grid.Nt + 1).dump() << "\n";
    for (const auto& level : f.levels) write_payload(out, level.v);
    if (!out) throw ConfigError("write failed: " + path);
}

void write_field(const std::string& path, const std::string& kind, const SpaceField& f) {
    std::ofstream out = open_out(path);
    out << header_json(kind, f.grid, 1).dump() << "\n";
    write_payload(out, f.v);
    if (!out) throw ConfigError("write failed: " + path);
}

SpaceTimeField read_space_time_field(const std::string& path, std::string* kind) {
    std::ifstream in = open_in(path);
    Header h = read_header(in, path);
    if (h.levels != h.grid.Nt + 1)
        throw ConfigError("field file level count does not match Nt: " + path);
    SpaceTimeField f(h.grid);
    for (auto& level : f.levels) read_payload(in, level.v, path);
    if (kind != nullptr) *kind = h.kind;
    return f;
}

SpaceField read_space_field(const std::string& path, std::string* kind) {
    std::ifstream in = open_in(path);
    Header h = read_header(in, path);
    if (h.levels != 1) throw ConfigError("expected single-level field file: " + path);
    SpaceField f(h.grid);
    read_payload(in, f.v, path);
    if (kind != nullptr) *kind = h.kind;
    return f;
}

}  // namespace mfg
