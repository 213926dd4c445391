#include "distforge/common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace distforge {

bool file_exists(const std::string& path) {
    std::error_code ec;
    return fs::exists(path, ec);
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) fail("io", "cannot create directory " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io", "cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail("io", "read failed for " + path);
    return data;
}

void write_file_atomic(const std::string& path, const std::string& data) {
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("io", "cannot open " + tmp + " for writing");
        out.write(data.data(), std::streamsize(data.size()));
        out.flush();
        if (!out) fail("io", "write failed for " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) fail("io", "rename " + tmp + " -> " + path + ": " + ec.message());
}

void append_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) fail("io", "cannot open " + path + " for append");
    out.write(data.data(), std::streamsize(data.size()));
    if (!out) fail("io", "append failed for " + path);
}

std::string format_double(double v) {
    // shortest representation that round-trips: try increasing precision
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v || (std::isnan(back) && std::isnan(v))) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace distforge
