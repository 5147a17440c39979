//! Source to assembly in one call, plus the matching initial memory image.

use thiserror::Error;

use crate::codegen::{emit_assembly, generate, symbol_name, CgirFunction, CodegenError};
use crate::frontend::{compile_to_ir, FrontendError, LoopIr};
use crate::maccpass::{run_macc_pass, PassReport};
use crate::machine::MachineDesc;
use crate::sim::{self, AsmProgram, DataImage, SimError, SimState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

#[derive(Debug, Clone)]
pub struct Compiled {
    /// IR straight from the front end.
    pub ir_before: LoopIr,
    /// IR after the MACC pass (identical to `ir_before` with `--no-macc`).
    pub ir: LoopIr,
    pub report: PassReport,
    pub function: CgirFunction,
    pub asm: String,
    /// Memory laid out for the program with declared initial values.
    pub image: DataImage,
}

impl Compiled {
    pub fn program(&self) -> Result<AsmProgram, SimError> {
        AsmProgram::from_cgir(&self.function)
    }

    /// Simulate on `image`, which must follow this program's layout.
    pub fn simulate(&self, image: &DataImage, desc: &MachineDesc) -> Result<SimState, SimError> {
        sim::run(&self.program()?, SimState::from_image(desc, image), desc, sim::DEFAULT_FUEL)
    }
}

fn initial_image(ir: &LoopIr, f: &CgirFunction) -> DataImage {
    let mut img = DataImage::new(&f.symbols);
    for v in &ir.vars {
        if let Some(init) = v.init {
            img.write(&symbol_name(&v.name), &vec![init; v.words() as usize]);
        }
    }
    img
}

/// Compile `source`; `macc` selects the optimized build.
pub fn compile(source: &str, desc: &MachineDesc, macc: bool) -> Result<Compiled, CompileError> {
    let ir_before = compile_to_ir(source)?;
    let (ir, report) = if macc { run_macc_pass(&ir_before, desc) } else { (ir_before.clone(), PassReport::default()) };
    let function = generate(&ir, desc)?;
    let asm = emit_assembly(&function, desc);
    let image = initial_image(&ir, &function);
    Ok(Compiled { ir_before, ir, report, function, asm, image })
}
