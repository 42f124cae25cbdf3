from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

# -ffp-contract=off forbids fused multiply-add contraction; results must be
# bit-identical to the pure-Python reference, which evaluates each multiply
# and add as a separate IEEE double operation.
ext_modules = [
    Pybind11Extension(
        "segui_kernels._native",
        ["src/kernels.cpp"],
        cxx_std=17,
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
]

setup(ext_modules=ext_modules, cmdclass={"build_ext": build_ext})
