#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nanoua/asm.hpp"

namespace {

bool read_file(const std::string& path, std::string& out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return false;
    std::ostringstream ss;
    ss << f.rdbuf();
    out = ss.str();
    return true;
}

bool write_file(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) return false;
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    return bool(f);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"assembler for stream-processor service programs"};
    app.require_subcommand(1);

    std::string build_in, build_out;
    auto* build = app.add_subcommand("build", "assemble source into a program image");
    build->add_option("input", build_in, "assembly source file")->required();
    build->add_option("-o,--output", build_out, "output image path")->required();

    std::string dump_in;
    auto* dump = app.add_subcommand("dump", "disassemble a program image to stdout");
    dump->add_option("input", dump_in, "program image file")->required();

    CLI11_PARSE(app, argc, argv);

    if (build->parsed()) {
        std::string source;
        if (!read_file(build_in, source)) {
            std::cerr << build_in << ": cannot read file\n";
            return 1;
        }
        const auto result =
            nanoua::uasm::assemble(source, std::filesystem::path(build_in).stem().string());
        if (!result.ok()) {
            for (const auto& e : result.errors)
                std::cerr << build_in << ":" << e.line << ": " << e.message << "\n";
            return 1;
        }
        const auto image = nanoua::vm::serialize_program(*result.program);
        if (!write_file(build_out, image)) {
            std::cerr << build_out << ": cannot write file\n";
            return 1;
        }
        return 0;
    }

    std::string raw;
    if (!read_file(dump_in, raw)) {
        std::cerr << dump_in << ": cannot read file\n";
        return 1;
    }
    const auto parsed = nanoua::vm::parse_program(
        std::span(reinterpret_cast<const uint8_t*>(raw.data()), raw.size()));
    if (!parsed.ok()) {
        std::cerr << dump_in << ": " << parsed.error << "\n";
        return 1;
    }
    const auto dis = nanoua::uasm::disassemble(parsed.program);
    if (!dis.ok()) {
        std::cerr << dump_in << ": " << dis.error << "\n";
        return 1;
    }
    std::cout << dis.text;
    return 0;
}
