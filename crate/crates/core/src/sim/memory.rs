use super::SimError;

/// How a region's words are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    RowMajor {
        rows: usize,
        cols: usize,
    },
    /// Column-major storage of a `rows x cols` matrix.
    ColMajor {
        rows: usize,
        cols: usize,
    },
    /// Plain one-dimensional array.
    Array,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub base: usize,
    pub len: usize,
    pub layout: Layout,
}

impl Region {
    pub fn end(&self) -> usize {
        self.base + self.len
    }

    pub fn contains(&self, addr: usize, len: usize) -> bool {
        addr >= self.base && addr + len <= self.end()
    }
}

/// Word-addressable external memory. Words are raw 32-bit patterns; floats
/// are stored by their bit pattern, indices as plain integers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryImage {
    words: Vec<u32>,
    regions: Vec<Region>,
}

impl MemoryImage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a region after the last one and returns its base address.
    pub fn add_region(&mut self, name: &str, words: Vec<u32>, layout: Layout) -> usize {
        let base = self.words.len();
        self.regions.push(Region {
            name: name.to_string(),
            base,
            len: words.len(),
            layout,
        });
        self.words.extend(words);
        base
    }

    pub fn add_f32_region(&mut self, name: &str, values: &[f32], layout: Layout) -> usize {
        self.add_region(name, values.iter().map(|v| v.to_bits()).collect(), layout)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Region containing `[addr, addr + len)`, if any.
    pub fn region_of(&self, addr: usize, len: usize) -> Option<&Region> {
        // regions are appended in address order
        let idx = self.regions.partition_point(|r| r.end() <= addr);
        self.regions.get(idx).filter(|r| r.contains(addr, len))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn read(&self, addr: usize, len: usize) -> &[u32] {
        &self.words[addr..addr + len]
    }

    pub fn write(&mut self, addr: usize, data: &[u32]) {
        self.words[addr..addr + data.len()].copy_from_slice(data);
    }

    pub fn region_words(&self, name: &str) -> Result<&[u32], SimError> {
        let r = self
            .region(name)
            .ok_or_else(|| SimError::UnknownRegion(name.to_string()))?;
        Ok(&self.words[r.base..r.end()])
    }

    pub fn region_f32(&self, name: &str) -> Result<Vec<f32>, SimError> {
        Ok(self
            .region_words(name)?
            .iter()
            .map(|w| f32::from_bits(*w))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_are_disjoint_and_located() {
        let mut m = MemoryImage::new();
        let a = m.add_region("a", vec![1, 2, 3], Layout::Array);
        let b = m.add_f32_region("b", &[1.5, 2.5], Layout::Array);
        assert_eq!((a, b), (0, 3));
        assert_eq!(m.region_of(2, 1).unwrap().name, "a");
        assert_eq!(m.region_of(3, 2).unwrap().name, "b");
        assert!(m.region_of(2, 2).is_none(), "straddles two regions");
        assert!(m.region_of(5, 1).is_none());
        assert_eq!(m.region_f32("b").unwrap(), vec![1.5, 2.5]);
    }
}
