pub const SCRIPT: &str = r#"<screenplay id="heist" title="Heist">
  <scene heading="INT. VAULT - NIGHT"><action>Alarms blare. Mara cracks the safe.</action>
    <dialogue speaker="MARA">Ten seconds.</dialogue>
    <dialogue speaker="JONAH">Guards on the stairs.</dialogue></scene>
  <scene heading="EXT. ROOFTOP - NIGHT"><action>Wind. A helicopter circles.</action>
    <dialogue speaker="JONAH">Jump now.</dialogue>
    <dialogue speaker="MARA">Not without the ledger.</dialogue></scene>
  <scene heading="INT. SAFEHOUSE - DAWN"><action>Mara opens the ledger and finds her own name.</action>
    <dialogue speaker="MARA">He sold us out.</dialogue></scene>
</screenplay>"#;

pub const SUMMARY: &str =
    "Mara and Jonah rob a vault , escape over the roof , and learn the ledger names Mara as a target .";
