#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dva {

// One named tensor inside an NTW1 container.
struct WeightEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

// NTW1 container: magic "NTW1", u32 entry count, then per entry
// u16 name length, name bytes, u8 rank, u32 dims[rank], raw f32 data.
// All integers and floats little-endian. Entry order is preserved, so a
// file written from the same entries is byte-identical.
class WeightFile {
public:
    void add(std::string name, std::vector<int> shape, std::vector<float> data);
    bool contains(const std::string& name) const;
    const WeightEntry& get(const std::string& name) const;
    const std::vector<WeightEntry>& entries() const { return entries_; }

    void write(const std::string& path) const;
    static WeightFile read(const std::string& path);

private:
    std::vector<WeightEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dva
