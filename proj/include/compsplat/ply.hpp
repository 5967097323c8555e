#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace compsplat {

enum class PlyType { int8, uint8, int16, uint16, int32, uint32, float32, float64 };

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::float32;
};

/// The vertex element of a PLY file as a dense row-major table. Values are
/// widened to double on read and narrowed to the declared type on write.
struct PlyTable {
    std::vector<PlyProperty> properties;
    std::size_t rows = 0;
    std::vector<double> values;

    /// Index of a property, or -1.
    [[nodiscard]] int column(const std::string& name) const;
    [[nodiscard]] int require_column(const std::string& name) const;
    [[nodiscard]] double at(std::size_t row, int col) const {
        return values[row * properties.size() + static_cast<std::size_t>(col)];
    }
    double& at(std::size_t row, int col) { return values[row * properties.size() + static_cast<std::size_t>(col)]; }
};

class PlyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads binary little-endian or ASCII PLY. Elements other than `vertex`
/// are skipped when they carry no list properties.
PlyTable read_ply(const std::filesystem::path& path);
/// Writes binary little-endian PLY.
void write_ply(const std::filesystem::path& path, const PlyTable& table);

}  // namespace compsplat
