"""Shared test fixtures.

Three reusable building blocks live here: a small Sobel-style C project
with a canned LLM script that drives the whole pipeline offline, a
threshold stub whose process fails iff its knob sits below a chosen
value (for range-validation tests), and the constant-voltage platform
profile whose per-cycle arithmetic works out to whole numbers.
"""

import hashlib
import json
import random
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from checkmate import llm, pipeline
from checkmate.approximator import ApproximationPatch, KnobSpec
from checkmate.manifest import OutputSpec, PlatformProfile

# -- the edge-filter fixture project ------------------------------------------

EDGE_MAIN_C = """\
#include <stdio.h>
#include <stdlib.h>
#include "filter.h"

int main(int argc, char **argv) {
    if (argc < 2) return 1;
    int w, h, maxval;
    int *img = load_image(argv[1], &w, &h, &maxval);
    if (!img) return 2;
    int *out = edge_filter(img, w, h);
    save_image("result.pgm", out, w, h, maxval);
    free(img);
    free(out);
    return 0;
}
"""

EDGE_FILTER_H = """\
int *load_image(const char *path, int *w, int *h, int *maxval);
int *edge_filter(int *img, int w, int h);
void save_image(const char *path, int *img, int w, int h, int maxval);
"""

EDGE_FILTER_C = """\
#include <stdio.h>
#include <stdlib.h>
#include "filter.h"

int *load_image(const char *path, int *w, int *h, int *maxval) {
    FILE *fh = fopen(path, "r");
    if (!fh) return NULL;
    char magic[3];
    if (fscanf(fh, "%2s", magic) != 1) { fclose(fh); return NULL; }
    if (fscanf(fh, "%d %d %d", w, h, maxval) != 3) { fclose(fh); return NULL; }
    int *img = malloc((size_t)(*w) * (*h) * sizeof(int));
    for (int i = 0; i < (*w) * (*h); i++) {
        if (fscanf(fh, "%d", &img[i]) != 1) { free(img); fclose(fh); return NULL; }
    }
    fclose(fh);
    return img;
}

int *edge_filter(int *img, int w, int h) {
    int *out = calloc((size_t)w * h, sizeof(int));
    for (int y = 1; y < h - 1; y++) {
        for (int x = 1; x < w - 1; x++) {
            int gx = img[(y - 1) * w + (x + 1)] - img[(y - 1) * w + (x - 1)]
                   + 2 * (img[y * w + (x + 1)] - img[y * w + (x - 1)])
                   + img[(y + 1) * w + (x + 1)] - img[(y + 1) * w + (x - 1)];
            int gy = img[(y + 1) * w + (x - 1)] - img[(y - 1) * w + (x - 1)]
                   + 2 * (img[(y + 1) * w + x] - img[(y - 1) * w + x])
                   + img[(y + 1) * w + (x + 1)] - img[(y - 1) * w + (x + 1)];
            int mag = (gx < 0 ? -gx : gx) + (gy < 0 ? -gy : gy);
            out[y * w + x] = mag > 255 ? 255 : mag;
        }
    }
    return out;
}

void save_image(const char *path, int *img, int w, int h, int maxval) {
    FILE *fh = fopen(path, "w");
    if (!fh) return;
    fprintf(fh, "P2\\n%d %d\\n%d\\n", w, h, maxval);
    for (int i = 0; i < w * h; i++) fprintf(fh, "%d\\n", img[i]);
    fclose(fh);
}
"""

EDGE_MAKEFILE = """\
CC = gcc
CFLAGS = -O1

OBJS = main.o filter.o

main: $(OBJS)
\t$(CC) $(CFLAGS) -o main $(OBJS)

%.o: %.c
\t$(CC) $(CFLAGS) -c $< -o $@

clean:
\trm -f $(OBJS) main
"""

# the perforated variant the canned LLM proposes: the outer row loop
# bound is scaled by knob1 percent
EDGE_APX_CODE = (
    "int *edge_filter(int *img, int w, int h) {\n"
    "    /* Knob Variables Declaration Start */\n"
    "    int knob1 = 80;\n"
    "    /* Knob Variables Declaration End */\n"
    "    int *out = calloc((size_t)w * h, sizeof(int));\n"
    "    for (int y = 1; y < (h - 1) * knob1 / 100; y++) {\n"
    "        for (int x = 1; x < w - 1; x++) {\n"
    "            int gx = img[(y - 1) * w + (x + 1)] - img[(y - 1) * w + (x - 1)]\n"
    "                   + 2 * (img[y * w + (x + 1)] - img[y * w + (x - 1)])\n"
    "                   + img[(y + 1) * w + (x + 1)] - img[(y + 1) * w + (x - 1)];\n"
    "            int gy = img[(y + 1) * w + (x - 1)] - img[(y - 1) * w + (x - 1)]\n"
    "                   + 2 * (img[(y + 1) * w + x] - img[(y - 1) * w + x])\n"
    "                   + img[(y + 1) * w + (x + 1)] - img[(y - 1) * w + (x + 1)];\n"
    "            int mag = (gx < 0 ? -gx : gx) + (gy < 0 ? -gy : gy);\n"
    "            out[y * w + x] = mag > 255 ? 255 : mag;\n"
    "        }\n"
    "    }\n"
    "    return out;\n"
    "}"
)

SUMMARY_REPLY = """\
The application is a small edge-detection pipeline over plain PGM images: it loads one image, computes a Sobel-style gradient magnitude, and writes the result back out.

{
  "code_summary": {
    "load_image": "Reads a plain PGM image from disk into an int array.",
    "edge_filter": "Computes a Sobel-style gradient magnitude over interior pixels.",
    "save_image": "Writes the result image as plain PGM.",
    "main": "Wires load, filter, and save together for one input file."
  }
}
"""

# probe replies, in approximation order (edge_filter first, main last)
PROBE_REPLIES = [
    "edge_filter computes the gradient magnitude; heavy arithmetic, error tolerant.",
    "load_image parses the PGM header and pixel list; structural, not tolerant.",
    "save_image serializes the output image; structural, not tolerant.",
    "main is control flow gluing the stages together.",
]

RATIONALES = {
    "edge_filter": "Dense per-pixel arithmetic; output quality degrades gracefully when rows are skipped.",
    "load_image": "Input parsing; skipping any token corrupts the image structurally.",
    "save_image": "Pure output serialization with no tolerance for missing pixels.",
    "main": "Control flow only; nothing to approximate.",
}

PLAN_REPLY = (
    "The edge_filter function walks every interior row and column of the image "
    "and computes two 3x3 gradient kernels per pixel. The dominant cost is the "
    "doubly nested loop, so the natural technique here is loop perforation on "
    "the outer row loop: scale the row bound by a knob variable so only a "
    "fraction of rows is processed. A knob variable knob1 in percent is the "
    "candidate; rows beyond the scaled bound stay zero. This is safe on MSP430 "
    "as it only changes the loop condition arithmetic."
)

APPLY_REPLY = (
    "Applying loop perforation to the outer row loop with knob1 declared at "
    "the top of the function:\n\n```c\n" + EDGE_APX_CODE + "\n```\n"
    "knob1 ranges from 20 to 100 percent in integer steps."
)

JSONIFY_REPLY = json.dumps(
    {
        "apx_code": EDGE_APX_CODE,
        "knob_variables": ["knob1"],
        "knob_ranges": [{"knob1": [20, 100]}],
        "knob_increments": [{"knob1": "Integer"}],
    },
    indent=2,
)

EDGE_DECISIONS = {
    "edge_filter": "approximate",
    "load_image": "do not approximate",
    "save_image": "do not approximate",
    "main": "do not approximate",
}

GOLDEN_ITERATIONS = 24
GOLDEN_SEED = 0
GOLDEN_DEPTH = 3


def selection_reply(decisions):
    parts = []
    for name, _ in decisions.items():
        parts.append(f"# {name}\n{RATIONALES.get(name, 'No rationale.')}\n")
    parts.append(json.dumps({"target_functions": decisions}, indent=2))
    return "\n".join(parts)


def edge_script(decisions=None, conv2_blocks=None, post_makefile=()):
    """Canned replies in the order the pipeline consumes them.

    ``conv2_blocks`` is one [plan, apply, jsonify, ...] list per selected
    function; the default proposes the loop-perforation patch for
    edge_filter.  ``post_makefile`` responses serve the alternatives
    loop, which runs after Makefile generation.
    """
    decisions = decisions or dict(EDGE_DECISIONS)
    if conv2_blocks is None:
        selected = [n for n, d in decisions.items() if d == "approximate"]
        conv2_blocks = [[PLAN_REPLY, APPLY_REPLY, JSONIFY_REPLY] for _ in selected]
    responses = [SUMMARY_REPLY, *PROBE_REPLIES, selection_reply(decisions)]
    for block in conv2_blocks:
        responses.extend(block)
    responses.append(EDGE_MAKEFILE)
    responses.extend(post_makefile)
    return responses


def textured_pgm_text(width=24, height=18, textured_rows=8, seed=7):
    """Noise on top, flat gray below: perforating the flat rows is free."""
    rng = random.Random(seed)
    pixels = [
        rng.randint(0, 255) if y < textured_rows else 128
        for y in range(height)
        for _ in range(width)
    ]
    lines = ["P2", f"{width} {height}", "255"] + [str(p) for p in pixels]
    return "\n".join(lines) + "\n"


def constant_energy_csv_text(samples=2000, dt=1e-4, voltage=3.3):
    lines = ["time_s,voltage_v"]
    lines += [f"{i * dt:.6f},{voltage}" for i in range(samples)]
    return "\n".join(lines) + "\n"


def edge_manifest_dict(**overrides):
    manifest = {
        "source_dir": "src",
        "input_traces": ["input.pgm"],
        "energy_traces": ["energy.csv"],
        "accuracy_class": "ssim",
        "error_bound": 0.30,
        "platform": "msp430-class",
        "capacitor_uF": 6.8,
        "output_spec": {"path": "result.pgm", "data_type": "image"},
    }
    manifest.update(overrides)
    return manifest


def write_edge_project(root, script=None, manifest_overrides=None):
    root = Path(root)
    src = root / "src"
    src.mkdir(parents=True, exist_ok=True)
    (src / "main.c").write_text(EDGE_MAIN_C)
    (src / "filter.h").write_text(EDGE_FILTER_H)
    (src / "filter.c").write_text(EDGE_FILTER_C)
    (root / "input.pgm").write_text(textured_pgm_text())
    (root / "energy.csv").write_text(constant_energy_csv_text())
    manifest = edge_manifest_dict(**(manifest_overrides or {}))
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    script_path = root / "script.json"
    script_path.write_text(json.dumps(script if script is not None else edge_script()))
    return SimpleNamespace(
        root=root,
        src=src,
        manifest=root / "manifest.json",
        script=script_path,
        input=root / "input.pgm",
        energy=root / "energy.csv",
    )


def tree_digest(directory):
    """Content hash over every file, path-ordered."""
    h = hashlib.sha256()
    for path in sorted(Path(directory).rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(directory)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


@pytest.fixture
def edge_project(tmp_path):
    return write_edge_project(tmp_path)


@pytest.fixture(scope="session")
def golden_runs(tmp_path_factory):
    """Two identical pipeline runs on the edge-filter project."""
    base = tmp_path_factory.mktemp("golden")
    project = write_edge_project(base)
    src_digest_before = tree_digest(project.src)
    outs, reports = [], []
    started = time.monotonic()
    for i in (1, 2):
        out = base / f"out{i}"
        provider = llm.ScriptedProvider.from_file(project.script)
        report = pipeline.run(
            project.manifest,
            provider,
            out,
            iterations=GOLDEN_ITERATIONS,
            seed=GOLDEN_SEED,
            traversal_depth=GOLDEN_DEPTH,
        )
        assert provider.remaining == 0
        outs.append(out)
        reports.append(report)
    elapsed = time.monotonic() - started
    return SimpleNamespace(
        project=project,
        out1=outs[0],
        out2=outs[1],
        report1=reports[0],
        report2=reports[1],
        elapsed=elapsed,
        src_digest_before=src_digest_before,
    )


# -- the threshold stub ---------------------------------------------------------

THRESHOLD_GUARD_C = """\
#include <stdio.h>
#include <stdlib.h>

int threshold_check(void) {
    /* Knob Variables Declaration Start */
    int knob1 = 70;
    /* Knob Variables Declaration End */
    if (knob1 < @T@) return 1;
    return 0;
}

int main(int argc, char **argv) {
    if (argc < 2) return 1;
    if (threshold_check() != 0) return 3;
    FILE *fh = fopen("out.txt", "w");
    if (!fh) return 4;
    fprintf(fh, "1\\n");
    fclose(fh);
    return 0;
}
"""

THRESHOLD_MAKEFILE = "CC = gcc\n\nmain: guard.c\n\t$(CC) -O0 -o main guard.c\n\nclean:\n\trm -f main\n"


def write_threshold_project(root, threshold):
    """Program that exits nonzero iff knob1 < threshold."""
    root = Path(root)
    template = root / "template"
    template.mkdir(parents=True, exist_ok=True)
    source = THRESHOLD_GUARD_C.replace("@T@", str(threshold))
    (template / "guard.c").write_text(source)
    (template / "Makefile").write_text(THRESHOLD_MAKEFILE)
    input_path = root / "input.txt"
    input_path.write_text("x\n")
    return SimpleNamespace(
        template=template,
        input=input_path,
        output_spec=OutputSpec(path="out.txt", data_type="numeric"),
        apx_code=source.split("int main")[0].strip(),
    )


def threshold_patch(project):
    return ApproximationPatch(
        function="threshold_check",
        apx_code=project.apx_code,
        knobs=(
            KnobSpec(
                name="knob1", lo=20.0, hi=100.0, increment_kind="Integer",
                declared_in="threshold_check", default=70.0,
            ),
        ),
        plan_text="guard threshold stub",
    )


# -- the whole-number platform profile ------------------------------------------

def canonical_profile():
    """Constants chosen so one power cycle persists exactly 30 units.

    From v_on the capacitor holds 0.5*C*(v_on^2 - v_warn^2) = 2.969e-4 J
    above the warn threshold, so the 30th unit (1e-5 J each) crosses it;
    the checkpoint (2 units worth) lands at sqrt(2.6) V, above v_off.
    """
    return PlatformProfile(
        name="msp430-class",
        energy_per_work_unit=1e-5,
        checkpoint_cost=2.0,
        v_on=3.0,
        v_warn=1.75,
        v_off=1.6,
        diode_drop=0.3,
        series_resistance=1e-3,
    )


CANONICAL_CAPACITANCE = 1e-4
CANONICAL_UNITS_PER_CYCLE = 30


@pytest.fixture
def profile():
    return canonical_profile()
