#include "prunetree/network.hpp"

#include <sstream>

#include "prunetree/error.hpp"

namespace prunetree {

const char* category_name(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::Structural: return "structural";
        case ErrorCategory::Validation: return "validation";
        case ErrorCategory::Precondition: return "precondition";
        case ErrorCategory::TrainingDiverged: return "training-diverged";
        case ErrorCategory::Ingestion: return "ingestion";
        case ErrorCategory::Io: return "io";
        case ErrorCategory::Degenerate: return "degenerate-representation";
        case ErrorCategory::Usage: return "usage";
    }
    return "unknown";
}

int NetworkSpec::removable_block_count() const {
    int n = 0;
    for (const auto& st : stages)
        for (const auto& b : st.blocks) n += b.removable() ? 1 : 0;
    return n;
}

int NetworkSpec::block_count() const {
    int n = 0;
    for (const auto& st : stages) n += static_cast<int>(st.blocks.size());
    return n;
}

namespace {

void check_conv(const ConvSpec& c, const std::string& where) {
    if (c.in_channels <= 0 || c.out_channels <= 0)
        throw StructuralError(where + ": channel counts must be positive (in=" +
                              std::to_string(c.in_channels) + ", out=" +
                              std::to_string(c.out_channels) + ")");
    if (c.kernel <= 0 || c.stride <= 0 || c.padding < 0)
        throw StructuralError(where + ": invalid kernel/stride/padding");
}

}  // namespace

void validate(const NetworkSpec& spec) {
    const auto& in = spec.input;
    if (in.channels <= 0 || in.height <= 0 || in.width <= 0)
        throw StructuralError("input shape must be positive");
    check_conv(spec.stem, "stem");
    if (spec.stem.in_channels != in.channels)
        throw StructuralError("stem in_channels does not match input channels");

    int channels = spec.stem.out_channels;
    int h = spec.stem.out_extent(in.height);
    int w = spec.stem.out_extent(in.width);
    if (h <= 0 || w <= 0) throw StructuralError("stem output is empty");

    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        const Stage& st = spec.stages[s];
        if (st.stride != 1 && st.stride != 2)
            throw StructuralError("stage " + std::to_string(s) + ": stride must be 1 or 2");
        for (std::size_t b = 0; b < st.blocks.size(); ++b) {
            const auto& blk = st.blocks[b];
            const std::string where = "stage " + std::to_string(s) + " block " + std::to_string(b);
            check_conv(blk.conv1, where + " conv1");
            check_conv(blk.conv2, where + " conv2");
            if (blk.conv1.in_channels != channels)
                throw StructuralError(where + ": conv1 expects " + std::to_string(blk.conv1.in_channels) +
                                      " channels, stream has " + std::to_string(channels));
            if (blk.conv2.in_channels != blk.conv1.out_channels)
                throw StructuralError(where + ": conv2 in_channels != conv1 out_channels");
            if (blk.conv2.stride != 1) throw StructuralError(where + ": conv2 stride must be 1");
            if (blk.removable()) {
                if (blk.conv1.stride != 1)
                    throw StructuralError(where + ": identity-shortcut block must have stride 1");
                if (blk.conv2.out_channels != channels)
                    throw StructuralError(where + ": identity-shortcut block must preserve channels");
            } else {
                if (b != 0) throw StructuralError(where + ": only the first block of a stage may project");
                const ConvSpec& sc = *blk.shortcut;
                check_conv(sc, where + " shortcut");
                if (sc.in_channels != channels || sc.out_channels != blk.conv2.out_channels ||
                    sc.stride != blk.conv1.stride || sc.kernel != 1 || sc.padding != 0)
                    throw StructuralError(where + ": shortcut projection shape mismatch");
            }
            if (b == 0 && blk.conv1.stride != st.stride)
                throw StructuralError(where + ": first block stride differs from stage stride");
            if (b > 0 && !blk.removable())
                throw StructuralError(where + ": later blocks must be shape-preserving");
            const int nh = blk.conv2.out_extent(blk.conv1.out_extent(h));
            const int nw = blk.conv2.out_extent(blk.conv1.out_extent(w));
            if (nh <= 0 || nw <= 0) throw StructuralError(where + ": output is empty");
            if (!blk.removable()) {
                if (blk.shortcut->out_extent(h) != nh || blk.shortcut->out_extent(w) != nw)
                    throw StructuralError(where + ": shortcut spatial extent mismatch");
            } else if (nh != h || nw != w) {
                throw StructuralError(where + ": identity block changes spatial extent");
            }
            h = nh;
            w = nw;
            channels = blk.conv2.out_channels;
        }
        if (st.out_channels != channels)
            throw StructuralError("stage " + std::to_string(s) + ": out_channels " +
                                  std::to_string(st.out_channels) + " != stream width " +
                                  std::to_string(channels));
    }
    if (spec.head.in_features != channels)
        throw StructuralError("head in_features does not match final channel count");
    if (spec.head.num_classes <= 0) throw StructuralError("head needs at least one class");
}

std::pair<int, int> stage_input_extent(const NetworkSpec& spec, std::size_t stage) {
    int h = spec.stem.out_extent(spec.input.height);
    int w = spec.stem.out_extent(spec.input.width);
    for (std::size_t s = 0; s < stage && s < spec.stages.size(); ++s) {
        for (const auto& blk : spec.stages[s].blocks) {
            h = blk.conv2.out_extent(blk.conv1.out_extent(h));
            w = blk.conv2.out_extent(blk.conv1.out_extent(w));
        }
    }
    return {h, w};
}

NetworkSpec make_resnet_spec(const InputShape& input, const std::vector<int>& widths,
                             const std::vector<int>& blocks_per_stage, int num_classes) {
    if (widths.empty() || widths.size() != blocks_per_stage.size())
        throw StructuralError("widths and blocks_per_stage must be non-empty and the same length");
    NetworkSpec spec;
    spec.input = input;
    spec.stem = ConvSpec{input.channels, widths[0], 3, 1, 1};
    int channels = widths[0];
    for (std::size_t s = 0; s < widths.size(); ++s) {
        if (blocks_per_stage[s] <= 0) throw StructuralError("every stage needs at least one block");
        Stage st;
        st.out_channels = widths[s];
        st.stride = s == 0 ? 1 : 2;
        for (int b = 0; b < blocks_per_stage[s]; ++b) {
            ResidualBlockSpec blk;
            const int stride = b == 0 ? st.stride : 1;
            blk.conv1 = ConvSpec{channels, widths[s], 3, stride, 1};
            blk.conv2 = ConvSpec{widths[s], widths[s], 3, 1, 1};
            if (stride != 1 || channels != widths[s])
                blk.shortcut = ConvSpec{channels, widths[s], 1, stride, 0};
            st.blocks.push_back(blk);
            channels = widths[s];
        }
        spec.stages.push_back(std::move(st));
    }
    spec.head = HeadSpec{channels, num_classes};
    validate(spec);
    return spec;
}

namespace {

void write_conv(std::ostream& os, const ConvSpec& c) {
    os << c.in_channels << ' ' << c.out_channels << ' ' << c.kernel << ' ' << c.stride << ' '
       << c.padding;
}

ConvSpec read_conv(std::istream& is) {
    ConvSpec c;
    if (!(is >> c.in_channels >> c.out_channels >> c.kernel >> c.stride >> c.padding))
        throw StructuralError("spec text: malformed conv entry");
    return c;
}

void expect(std::istream& is, const std::string& word) {
    std::string got;
    if (!(is >> got) || got != word)
        throw StructuralError("spec text: expected '" + word + "', got '" + got + "'");
}

}  // namespace

std::string to_canonical_text(const NetworkSpec& spec) {
    std::ostringstream os;
    os << "prnet-spec 1\n";
    os << "input " << spec.input.channels << ' ' << spec.input.height << ' ' << spec.input.width << '\n';
    os << "stem ";
    write_conv(os, spec.stem);
    os << '\n';
    os << "stages " << spec.stages.size() << '\n';
    for (const auto& st : spec.stages) {
        os << "stage " << st.out_channels << ' ' << st.stride << ' ' << st.blocks.size() << '\n';
        for (const auto& b : st.blocks) {
            os << "block ";
            write_conv(os, b.conv1);
            os << " | ";
            write_conv(os, b.conv2);
            os << " | ";
            if (b.shortcut)
                write_conv(os, *b.shortcut);
            else
                os << "identity";
            os << '\n';
        }
    }
    os << "head " << spec.head.in_features << ' ' << spec.head.num_classes << '\n';
    return os.str();
}

NetworkSpec parse_spec_text(const std::string& text) {
    std::istringstream is(text);
    NetworkSpec spec;
    expect(is, "prnet-spec");
    int version = 0;
    if (!(is >> version) || version != 1) throw StructuralError("spec text: unsupported version");
    expect(is, "input");
    if (!(is >> spec.input.channels >> spec.input.height >> spec.input.width))
        throw StructuralError("spec text: malformed input shape");
    expect(is, "stem");
    spec.stem = read_conv(is);
    expect(is, "stages");
    std::size_t nstages = 0;
    if (!(is >> nstages) || nstages > 1024) throw StructuralError("spec text: bad stage count");
    for (std::size_t s = 0; s < nstages; ++s) {
        Stage st;
        std::size_t nblocks = 0;
        expect(is, "stage");
        if (!(is >> st.out_channels >> st.stride >> nblocks) || nblocks > 4096)
            throw StructuralError("spec text: malformed stage header");
        for (std::size_t b = 0; b < nblocks; ++b) {
            ResidualBlockSpec blk;
            expect(is, "block");
            blk.conv1 = read_conv(is);
            expect(is, "|");
            blk.conv2 = read_conv(is);
            expect(is, "|");
            is >> std::ws;
            if (is.peek() == 'i') {
                expect(is, "identity");
            } else {
                blk.shortcut = read_conv(is);
            }
            st.blocks.push_back(blk);
        }
        spec.stages.push_back(std::move(st));
    }
    expect(is, "head");
    if (!(is >> spec.head.in_features >> spec.head.num_classes))
        throw StructuralError("spec text: malformed head");
    validate(spec);
    return spec;
}

}  // namespace prunetree
