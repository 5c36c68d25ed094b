#include "binary_io.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

namespace onebit::detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::filesystem::filesystem_error("cannot open for reading", path,
                                                std::make_error_code(std::errc::no_such_file_or_directory));
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::filesystem::filesystem_error("cannot open for writing", path,
                                                std::make_error_code(std::errc::permission_denied));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
    }
}

}  // namespace onebit::detail
