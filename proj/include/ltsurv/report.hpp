#ifndef LTSURV_REPORT_HPP
#define LTSURV_REPORT_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "math_utils.hpp"

namespace ltsurv {

constexpr const char* kSchemaVersion = "1";

struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string artifact_version = "1.0.0";
    std::map<std::string, std::string> input_digests; // path -> hex digest
    std::vector<std::string> output_paths;
    double wall_seconds = 0.0;

    std::string to_json() const {
        std::ostringstream os;
        os << "{\n";
        os << "  \"schema_version\": \"" << kSchemaVersion << "\",\n";
        os << "  \"command\": \"" << command << "\",\n";
        os << "  \"config_digest\": \"" << config_digest << "\",\n";
        os << "  \"seed\": " << seed << ",\n";
        os << "  \"artifact_version\": \"" << artifact_version << "\",\n";
        os << "  \"input_digests\": {";
        bool first = true;
        for (const auto& [path, digest] : input_digests) {
            os << (first ? "" : ",") << "\n    \"" << path << "\": \"" << digest << "\"";
            first = false;
        }
        os << (first ? "" : "\n  ") << "},\n";
        os << "  \"output_paths\": [";
        first = true;
        for (const std::string& p : output_paths) {
            os << (first ? "" : ",") << "\n    \"" << p << "\"";
            first = false;
        }
        os << (first ? "" : "\n  ") << "],\n";
        os << "  \"wall_seconds\": " << wall_seconds << "\n";
        os << "}\n";
        return os.str();
    }
};

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex_digest(fnv1a(ss.str()));
}

} // namespace ltsurv

#endif
