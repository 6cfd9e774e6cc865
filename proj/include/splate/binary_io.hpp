#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "splate/error.hpp"

namespace splate::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte sink.
class byte_writer {
public:
    void magic(std::string_view tag) { m_bytes.insert(m_bytes.end(), tag.begin(), tag.end()); }

    template <class T>
        requires std::is_arithmetic_v<T>
    void put(T value)
    {
        std::array<std::uint8_t, sizeof(T)> raw{};
        std::memcpy(raw.data(), &value, sizeof(T));
        m_bytes.insert(m_bytes.end(), raw.begin(), raw.end());
    }

    template <class T>
    void put_all(std::span<const T> values)
    {
        for (T v : values) {
            put(v);
        }
    }

    /// Unsigned LEB128-style variable-byte code: 7 payload bits per byte, high
    /// bit set on every byte except the last.
    void put_varbyte(std::uint64_t value)
    {
        while (value >= 0x80) {
            m_bytes.push_back(static_cast<std::uint8_t>(value & 0x7f) | 0x80);
            value >>= 7;
        }
        m_bytes.push_back(static_cast<std::uint8_t>(value));
    }

    void put_bytes(std::span<const std::uint8_t> bytes) { m_bytes.insert(m_bytes.end(), bytes.begin(), bytes.end()); }

    [[nodiscard]] const std::vector<std::uint8_t>& bytes() const noexcept { return m_bytes; }
    [[nodiscard]] std::vector<std::uint8_t> take() noexcept { return std::move(m_bytes); }

private:
    std::vector<std::uint8_t> m_bytes;
};

class byte_reader {
public:
    byte_reader(std::span<const std::uint8_t> bytes, std::string what) : m_bytes(bytes), m_what(std::move(what)) {}

    void expect_magic(std::string_view tag)
    {
        need(tag.size());
        if (std::memcmp(m_bytes.data() + m_pos, tag.data(), tag.size()) != 0) {
            throw format_error(m_what + ": bad magic, expected \"" + std::string(tag) + "\"");
        }
        m_pos += tag.size();
    }

    template <class T>
        requires std::is_arithmetic_v<T>
    T get()
    {
        need(sizeof(T));
        T value;
        std::memcpy(&value, m_bytes.data() + m_pos, sizeof(T));
        m_pos += sizeof(T);
        return value;
    }

    std::uint64_t get_varbyte()
    {
        std::uint64_t value = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            auto byte = get<std::uint8_t>();
            value |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
            if ((byte & 0x80) == 0) {
                return value;
            }
        }
        throw format_error(m_what + ": variable-byte integer overflow at offset " + std::to_string(m_pos));
    }

    std::span<const std::uint8_t> get_bytes(std::size_t n)
    {
        need(n);
        auto out = m_bytes.subspan(m_pos, n);
        m_pos += n;
        return out;
    }

    [[nodiscard]] bool done() const noexcept { return m_pos == m_bytes.size(); }
    [[nodiscard]] std::size_t offset() const noexcept { return m_pos; }

    void expect_end() const
    {
        if (!done()) {
            throw format_error(m_what + ": " + std::to_string(m_bytes.size() - m_pos) + " trailing bytes");
        }
    }

    [[noreturn]] void fail(const std::string& message) const
    {
        throw format_error(m_what + ": " + message + " (offset " + std::to_string(m_pos) + ")");
    }

private:
    void need(std::size_t n) const
    {
        if (m_bytes.size() - m_pos < n) {
            throw format_error(m_what + ": truncated at offset " + std::to_string(m_pos));
        }
    }

    std::span<const std::uint8_t> m_bytes;
    std::size_t m_pos = 0;
    std::string m_what;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw not_found_error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("short write to " + path.string());
    }
}

inline std::string read_text(const std::filesystem::path& path)
{
    auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

inline void write_text(const std::filesystem::path& path, std::string_view text)
{
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace splate::io
