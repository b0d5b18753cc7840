#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "nanoua/nsimage.hpp"

namespace {

bool write_file(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) return false;
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    return bool(f);
}

void print_report(const nanoua::ns::SizeReport& r) {
    std::printf("nodes        %u\n", r.node_count);
    std::printf("header       %u bytes\n", r.header_bytes);
    std::printf("records      %u bytes\n", r.record_bytes);
    std::printf("value slots  %u bytes\n", r.value_bytes);
    std::printf("index        %u bytes\n", r.index_bytes);
    std::printf("total        %u bytes (budget %u)\n", r.total_bytes,
                nanoua::ns::kMaxImageBytes);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"namespace model compiler"};
    app.require_subcommand(1);

    std::string compile_in, compile_out;
    bool report = false;
    auto* compile = app.add_subcommand("compile", "compile a model into a namespace image");
    compile->add_option("input", compile_in, "model source file")->required();
    compile->add_option("-o,--output", compile_out, "output image path")->required();
    compile->add_flag("--report", report, "print a size breakdown");

    std::string verify_in;
    auto* verify = app.add_subcommand("verify", "structurally check an existing image");
    verify->add_option("input", verify_in, "namespace image file")->required();

    CLI11_PARSE(app, argc, argv);

    if (compile->parsed()) {
        const auto result = nanoua::ns::compile_model_file(compile_in);
        if (!result.ok()) {
            for (const auto& e : result.errors)
                std::cerr << e.file << ":" << e.line << ": " << e.message << "\n";
            return 1;
        }
        if (!write_file(compile_out, result.image)) {
            std::cerr << compile_out << ": cannot write file\n";
            return 1;
        }
        if (report) print_report(result.report);
        return 0;
    }

    std::ifstream f(verify_in, std::ios::binary);
    if (!f) {
        std::cerr << verify_in << ": cannot read file\n";
        return 1;
    }
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    auto opened = nanoua::ns::NamespaceImage::open(std::move(bytes));
    if (!opened.image) {
        std::cerr << verify_in << ": " << opened.error << "\n";
        return 1;
    }
    print_report(opened.image->report());
    return 0;
}
